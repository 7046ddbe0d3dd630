import sys

from spikestrack.cli import main

sys.exit(main())
