import sys

from emm.cli import main

sys.exit(main())
