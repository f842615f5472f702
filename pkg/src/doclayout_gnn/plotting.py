"""Report figures. Everything renders off-screen to PNG files."""

import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .layout import atomic_write_bytes  # noqa: E402

RC = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "svg.hashsalt": "doclayout",
}

FIG_SIZE = (5.0, 3.2)


def figure_path(report_path):
    """``report.json`` -> ``report.png`` alongside it."""
    root, _ = os.path.splitext(os.fspath(report_path))
    return root + ".png"


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
    return path


def plot_loss_trace(trace, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=FIG_SIZE, layout="constrained")
        epochs = [r["epoch"] for r in trace]
        for key, style in (("generator", "-"), ("reconstruction", "--"), ("discriminator", ":")):
            ax.plot(epochs, [r[key] for r in trace], style, label=key, lw=1.2)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("epoch-mean loss")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_eval_report(report, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=FIG_SIZE, layout="constrained")
        names = list(report["conditions"])
        means = [report["conditions"][n]["mean"] for n in names]
        stds = [report["conditions"][n]["std"] for n in names]
        ax.bar(range(len(names)), means, yerr=stds, capsize=4,
               color=["#999999", "#1f77b4"][: len(names)])
        ax.set_xticks(range(len(names)), [n.replace("_", " ") for n in names])
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel(f"test accuracy ({len(report['seeds'])} seeds)")
        return _save(fig, path)


def plot_validation(report, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=FIG_SIZE, layout="constrained")
        agg = report["aggregate"]
        rules = list(agg["rule_pass_rate"]) + ["all"]
        rates = list(agg["rule_pass_rate"].values()) + [agg["overall_pass_rate"]]
        ax.bar(range(len(rules)), rates, color="#2ca02c")
        ax.set_xticks(range(len(rules)), rules)
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("pass rate")
        return _save(fig, path)


def plot_perplexity(report, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.0, 3.2), layout="constrained")
        ax.bar([0], [report["perplexity"]], color="#1f77b4")
        ax.set_xticks([0], [f"G={report['grid']}, alpha={report['alpha']:g}"])
        ax.set_ylabel("layout perplexity")
        return _save(fig, path)
