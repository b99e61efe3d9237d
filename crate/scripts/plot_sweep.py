"""Plot one or more sweep CSVs produced by `dynkin sweep`.

    dynkin sweep --kind call --s0 140 --out call140.csv
    python scripts/plot_sweep.py call140.csv -o call140.png
"""

import argparse
import csv

import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    cols = {k: [float(r[k]) for r in rows] for k in rows[0]}
    return cols


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("csv", nargs="+")
    parser.add_argument("-o", "--output", help="image file; shows a window if omitted")
    args = parser.parse_args()

    fig, ax = plt.subplots()
    for path in args.csv:
        c = read(path)
        ax.errorbar(c["T"], c["value"], yerr=[2 * s for s in c["std_error"]], marker="o", label=path)
        ax.plot(c["T"], c["perpetual"], linestyle=":", color="grey")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("T")
    ax.set_ylabel("value")
    ax.legend()
    if args.output:
        fig.savefig(args.output, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
