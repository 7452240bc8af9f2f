"""Human-readable bench output: aligned table, CSV and a bar chart."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLUMNS = (
    ("attack", "Attack", "{}"),
    ("bit_accuracy", "BitAcc(%)", "{:.2f}"),
    ("bit_check_accuracy", "CheckAcc(%)", "{:.2f}"),
    ("found_rate", "Found(%)", "{:.1f}"),
    ("mean_blocks", "Blocks", "{:.2f}"),
    ("psnr", "PSNR(dB)", "{:.2f}"),
    ("byte_increase_rate", "ByteInc(%)", "{:.2f}"),
)
PERCENT = {"bit_accuracy", "bit_check_accuracy", "found_rate"}


def _cell(row: dict, key: str, fmt: str) -> str:
    v = row[key]
    if key in PERCENT:
        v = 100.0 * v
    return fmt.format(v)


def render_table(report: dict, timing: dict | None = None) -> str:
    header = [title for _, title, _ in COLUMNS]
    body = [[_cell(r, k, f) for k, _, f in COLUMNS] for r in report["rows"]]
    if timing is not None:
        header.append("Time(s)")
        for line, r in zip(body, report["rows"]):
            line.append(f"{timing.get(r['attack'], 0.0):.2f}")
    widths = [max(len(h), *(len(line[i]) for line in body)) for i, h in enumerate(header)]

    def fmt(cells):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))

    lines = [
        f"images={report['images']} skipped={report['skipped']} detector={report['detector']} "
        f"master_seed={report['master_seed']}",
        fmt(header),
        "  ".join("-" * w for w in widths),
    ]
    lines += [fmt(line) for line in body]
    return "\n".join(lines) + "\n"


def render_csv(report: dict) -> str:
    buf = io.StringIO()
    keys = [k for k, _, _ in COLUMNS]
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for r in report["rows"]:
        writer.writerow({k: r[k] if isinstance(r[k], str) else f"{r[k]:.6f}" for k in keys})
    return buf.getvalue()


def plot_accuracy(report: dict, path) -> None:
    """Bar chart of bit accuracy and bit check accuracy per attack."""
    rows = report["rows"]
    names = [r["attack"] for r in rows]
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.7 * len(rows) + 2), 4.0))
    w = 0.4
    ax.bar([i - w / 2 for i in x], [100 * r["bit_accuracy"] for r in rows], w, label="bit accuracy")
    ax.bar([i + w / 2 for i in x], [100 * r["bit_check_accuracy"] for r in rows], w, label="bit check accuracy")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("%")
    ax.set_ylim(0, 105)
    ax.legend(loc="lower left")
    ax.set_title(f"{report['images']} images, detector={report['detector']}")
    fig.tight_layout()
    # no timestamp in the metadata so reruns give identical bytes
    fig.savefig(Path(path), dpi=100, metadata={"Software": None})
    plt.close(fig)
