# Configuration, exceptions and image primitives.
