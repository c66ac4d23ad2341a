import sys

from pargomea.cli import main

sys.exit(main())
