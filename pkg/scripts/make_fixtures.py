#!/usr/bin/env python3
"""Write the synthetic fixture suite (stories, features, knowledge graphs)."""

import argparse
import json

from storybridge.fixtures import write_fixtures


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/fixtures")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--variants", type=int, default=5)
    parser.add_argument("--bridged-copies", type=int, default=2)
    args = parser.parse_args()
    paths = write_fixtures(args.out_dir, seed=args.seed, variants=args.variants, bridged_copies=args.bridged_copies)
    print(json.dumps(paths, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
