#!/usr/bin/env python3
"""
snnd

Dieses Modul erlaubt den Aufruf mit ``python -m snnd.main``.
Die eigentliche CLI ist in cli.py implementiert.

Verwendung:
    snnd train --config run.cfg
    snnd eval --checkpoint runs/default/best.snnm --config run.cfg --t-max all
    python -m snnd.main attack --checkpoint best.snnm --config run.cfg --attack pgd
"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
