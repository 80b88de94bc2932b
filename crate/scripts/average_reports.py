#!/usr/bin/env python3
"""Average score tables (crps.csv or mae.csv) from several runs.

Rows are matched on (scheme, method); every numeric column is averaged.
All inputs must share the same header and row set.

    scripts/average_reports.py out_farm_a/crps.csv out_farm_b/crps.csv > crps_avg.csv
"""

import argparse
import csv
import sys


def read_table(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = {(r[0], r[1]): [float(x) for x in r[2:]] for r in reader if r}
    return header, rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("tables", nargs="+", help="score tables to average")
    args = parser.parse_args(argv)

    header, first = read_table(args.tables[0])
    order = list(first)
    sums = {k: list(v) for k, v in first.items()}
    for path in args.tables[1:]:
        other_header, rows = read_table(path)
        if other_header != header:
            sys.exit(f"{path}: header differs from {args.tables[0]}")
        if set(rows) != set(sums):
            sys.exit(f"{path}: rows differ from {args.tables[0]}")
        for key, values in rows.items():
            sums[key] = [a + b for a, b in zip(sums[key], values)]

    n = len(args.tables)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    for key in order:
        writer.writerow([*key, *(f"{v / n:.4f}" for v in sums[key])])


if __name__ == "__main__":
    main()
