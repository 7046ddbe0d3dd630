# HTTP routes of the tracking job service.
