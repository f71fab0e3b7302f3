"""JSON / Markdown renderings of a validation report and plot-data CSVs."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from ..io import dumps_json, write_text

SCORE_COLUMNS = ("object_id", "pc1", "pc2", "cluster", "dataset")
SILHOUETTE_COLUMNS = ("object_id", "cluster", "s_value", "order")


def report_json(report) -> str:
    d = report if isinstance(report, dict) else report.to_dict()
    return dumps_json(d)


def _rows_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def plot_files(plots: dict) -> dict:
    """Map of relative file name -> CSV text, one file per plot."""
    files = {}

    def add(prefix, bundle):
        scores = bundle.get("scores", {})
        if "rows" in scores:
            files[f"{prefix}_scores.csv"] = _rows_csv(scores["rows"], SCORE_COLUMNS)
        for side, rows in bundle.get("silhouettes", {}).items():
            if isinstance(rows, list):
                files[f"{prefix}_silhouettes_{side}.csv"] = _rows_csv(rows, SILHOUETTE_COLUMNS)

    for variant in sorted(plots):
        bundle = plots[variant]
        if "error" in bundle:
            continue
        add(variant, bundle)
        if isinstance(bundle.get("null"), dict) and "skipped" not in bundle["null"]:
            add(f"null_{variant}", bundle["null"])
    return files


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _index_table(entries: dict, title: str) -> list[str]:
    lines = [f"| {title} | discovery | validation | gap | direction |",
             "|---|---|---|---|---|"]
    for name, e in entries.items():
        dv = e["discovery"].get("value", e["discovery"].get("undefined", "undefined"))
        vv = e["validation"].get("value", e["validation"].get("undefined", "undefined"))
        lines.append(f"| {name} | {_fmt(dv)} | {_fmt(vv)} | {_fmt(e.get('gap'))} | "
                     f"{e['direction']} |")
    return lines


def report_markdown(report) -> str:
    d = report if isinstance(report, dict) else report.to_dict()
    out = ["# Cluster validation report", ""]
    s1 = d["step1"]
    out += ["## Step 1: method selection on discovery data", "",
            f"Selected: `{s1['selected']}` by {s1['criterion']} = {_fmt(s1['value'])} "
            f"({s1['direction']}).", "",
            "| rank | method | value | status |", "|---|---|---|---|"]
    for r in s1["ranking"]:
        out.append(f"| {r.get('rank', '-')} | {r['label']} | {_fmt(r.get('value'))} | "
                   f"{r['status']} |")
    out.append("")

    opt = d["optimism"]
    out += ["## Optimism on the selection criterion", "",
            f"Discovery {opt['criterion']}: {_fmt(opt['discovery'])}", ""]
    for v in ("method_based", "result_based"):
        if v in opt:
            e = opt[v]
            if "undefined" in e:
                out.append(f"- {v}: undefined ({e['undefined']})")
            else:
                out.append(f"- {v}: validation {_fmt(e['validation'])}, gap {_fmt(e['gap'])}")
    out.append("")

    out += ["## Step 2: validation", ""]
    for key in sorted(d["sections"]):
        sec = d["sections"][key]
        out += [f"### {key}", ""]
        if "error" in sec:
            out += [f"Not computed: {sec['message']} ({sec['error']})", ""]
            continue
        if key.startswith("internal."):
            out += _index_table(sec["indices"], "index")
        elif key.startswith("external."):
            out += _index_table(sec["statistics"], "statistic")
            for name, e in sec["statistics"].items():
                pd, pv = e["discovery"].get("p_value"), e["validation"].get("p_value")
                if pd is not None or pv is not None:
                    out.append(f"\n{name} p-values: discovery {_fmt(pd)}, validation {_fmt(pv)}")
        elif key == "stability":
            out.append(f"Compared: {sec['compared']}")
            out.append("")
            for name, e in sec["indices"].items():
                out.append(f"- {name}: {_fmt(e['value'])}")
            nr = sec.get("null_reference")
            if nr:
                if "skipped" in nr:
                    out.append(f"- null reference skipped: {nr['skipped']}")
                else:
                    out.append(f"- null reference ({nr['null_kind']}, M={nr['M']}): "
                               f"p = {_fmt(nr['p_value'])}")
                    out.append(f"\n> {nr['caveat']}")
        elif key.startswith("visual."):
            sc = sec.get("scores", {})
            out.append(f"- projection: {sc.get('skipped') or 'axes from ' + sc.get('axes', '?')}")
            out.append("- plot data written as CSV files alongside this report")
        elif key == "user_threshold":
            out.append("User-declared pre-registered threshold (not a toolkit verdict): "
                       f"{sec['threshold']}; observed {_fmt(sec['observed_validation_value'])}; "
                       f"meets: {sec.get('meets_user_threshold', 'n/a')}")
        out.append("")
    if d.get("notices"):
        out += ["## Notices", ""] + [f"- {n}" for n in d["notices"]] + [""]
    prov = d["provenance"]
    out += ["## Provenance", "",
            f"- toolkit version: {prov['toolkit_version']}",
            f"- master seed: {prov['seeds']['master']}",
            f"- validation seal: `{prov['seal']['content_hash']}`", ""]
    return "\n".join(out)


def write_report(report, out_dir, resolved_config: dict = None) -> dict:
    """Write report.json, report.md, plots/*.csv and the resolved config."""
    out_dir = Path(out_dir)
    written = {}
    written["report.json"] = write_text(out_dir / "report.json", report_json(report))
    written["report.md"] = write_text(out_dir / "report.md", report_markdown(report))
    for name, text in plot_files(report.plots).items():
        written[f"plots/{name}"] = write_text(out_dir / "plots" / name, text)
    (out_dir / "plots").mkdir(parents=True, exist_ok=True)
    if resolved_config is not None:
        written["resolved_config.json"] = write_text(out_dir / "resolved_config.json",
                                                     dumps_json(resolved_config))
    return written
