"""Run the frozen desk-scale training check and print its report as JSON.

    python scripts/run_desk_training.py [--config scripts/desk_config.json] [--write]
"""

import argparse
import json
import sys
from pathlib import Path

from dsnet.config import load_run_config
from dsnet.desk import desk_run

DEFAULT_CONFIG = Path(__file__).with_name("desk_config.json")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=str(DEFAULT_CONFIG))
    parser.add_argument("--write", action="store_true", help="also write loss.tsv and checkpoint.dsn")
    args = parser.parse_args(argv)
    report = desk_run(load_run_config(args.config), write=args.write)
    print(json.dumps(report.as_dict(), indent=2))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
