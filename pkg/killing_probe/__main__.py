import sys

from killing_probe.app import main

sys.exit(main())
