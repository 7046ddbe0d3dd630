# SPiKeS model-free visual tracker: library, command line and job service.

__version__ = "1.0.0"
