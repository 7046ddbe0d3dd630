# Sequence I/O, rendering and the in-process job store.
