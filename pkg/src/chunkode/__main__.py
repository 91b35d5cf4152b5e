import sys

from chunkode.cli import main

sys.exit(main())
