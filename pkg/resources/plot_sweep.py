"""Plot a PT sweep CSV from ``fbc simulate --sweep-pt ... --csv``.

Needs the `plot` extra (matplotlib).
"""

import argparse
import csv

import matplotlib.pyplot as plt  # type: ignore[import]


def main() -> None:
    """Render CR/ER, distance, and TE against PT."""
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv", help="sweep CSV")
    parser.add_argument("--out", default="sweep.png", help="output image")
    args = parser.parse_args()

    with open(args.csv) as f:
        rows = list(csv.DictReader(f))
    pt = [int(r["pt_ms"]) for r in rows]

    fig, axes = plt.subplots(1, 3, figsize=(14, 4))
    axes[0].plot(pt, [float(r["cr"]) for r in rows], marker="o", label="CR")
    axes[0].plot(pt, [float(r["er"]) for r in rows], marker="s", label="ER")
    axes[0].axhline(1.0, color="grey", linewidth=0.5)
    axes[0].legend()
    axes[1].plot(pt, [float(r["mean_distance"]) for r in rows], marker="o")
    axes[1].set_ylabel("mean cube distance")
    axes[2].plot(pt, [float(r["mean_te_us"]) / 1e3 for r in rows], marker="o", label="mean")
    axes[2].plot(pt, [float(r["median_te_us"]) / 1e3 for r in rows], marker="s", label="median")
    axes[2].set_ylabel("temporal error (ms)")
    axes[2].legend()
    for ax in axes:
        ax.set_xlabel("PT (ms)")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
