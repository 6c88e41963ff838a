import sys

from openloop_fw.cli import main

sys.exit(main())
