# Tracking pipeline: segmentation, keypoints, SPiKeS, tracker, evaluation and synthetic data.
