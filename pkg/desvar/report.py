"""
@file report.py
@brief Experiment reports: CSV, JSON and the text summary table
@details
CSV and JSON carry no wall-clock data, so the same spec and base seed always
produce the same bytes. The text table adds the run time and one summary
paragraph per measure.
"""

import csv
import io
import json
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional

from desvar import config
from desvar.errors import ValidationError
from desvar.logging import logger

GROUP_ORDER = ("Base", "CRN", "AV", "CV")
TECHNIQUES = GROUP_ORDER[1:]

CSV_COLUMNS = (
    "measure",
    "group",
    "n",
    "mean",
    "variance",
    "stdev",
    "half_width",
    "statistic",
    "df",
    "p_value",
    "decision",
    "winner",
    "manifests",
)


class ReportFormat(Enum):
    Csv = "csv"
    Json = "json"
    Table = "table"

    def __str__(self):
        return self.value


REPORT_FILES = {
    ReportFormat.Csv: config.REPORT_CSV,
    ReportFormat.Json: config.REPORT_JSON,
    ReportFormat.Table: config.REPORT_TEXT,
}


@dataclass
class GroupSummary:
    n: int
    mean: float
    variance: float
    stdev: float
    half_width: float


@dataclass
class MeasureReport:
    name: str
    groups: Dict[str, GroupSummary]
    statistic: float
    df: int
    p_value: float
    decision: str
    winner: Optional[str] = None
    note: Optional[str] = None
    details: Dict[str, Dict] = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.decision == "reject"

    @classmethod
    def from_dict(cls, raw) -> "MeasureReport":
        raw = dict(raw)
        raw["groups"] = {k: GroupSummary(**v) for k, v in raw["groups"].items()}
        return cls(**raw)


@dataclass
class ExperimentReport:
    model: str
    spec: Dict
    measures: List[MeasureReport]
    manifests: Dict[str, List[str]]
    wall_clock: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "model": self.model,
            "spec": self.spec,
            "measures": [asdict(m) for m in self.measures],
            "manifests": self.manifests,
        }

    @classmethod
    def from_dict(cls, raw) -> "ExperimentReport":
        try:
            return cls(
                model=raw["model"],
                spec=raw["spec"],
                measures=[MeasureReport.from_dict(m) for m in raw["measures"]],
                manifests=raw["manifests"],
            )
        except (KeyError, TypeError) as ex:
            raise ValidationError(f"not an experiment report: {ex}")

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except json.JSONDecodeError as ex:
            raise ValidationError(f"{path}: parse error: {ex}")


def _render_csv(report: ExperimentReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for measure in report.measures:
        for label, group in measure.groups.items():
            writer.writerow(
                [
                    measure.name,
                    label,
                    group.n,
                    repr(group.mean),
                    repr(group.variance),
                    repr(group.stdev),
                    repr(group.half_width),
                    repr(measure.statistic),
                    measure.df,
                    repr(measure.p_value),
                    measure.decision,
                    measure.winner or "",
                    ";".join(report.manifests.get(label, [])),
                ]
            )
    return out.getvalue()


def _render_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def summary_sentence(measure: MeasureReport, alpha: float) -> str:
    """Plain language outcome of the variance comparison for one measure"""
    level = f"{(1.0 - alpha) * 100:g}%"
    p_value = f"{measure.p_value:.3f}"
    if measure.rejected:
        text = (
            f"At the {level} confidence level the difference in variance between the "
            f"groups is statistically significant: the p-value ({p_value}) is less than "
            f"the significance level ({alpha:g}), so we reject the null hypothesis of "
            "equal variances."
        )
        if measure.winner:
            text += f" {measure.winner} achieved the largest reduction in variance."
        else:
            text += f" No technique reduced the variance below Base ({measure.note})."
        return text
    return (
        f"At the {level} confidence level the difference in variance between the "
        f"groups is statistically insignificant: the p-value ({p_value}) is not less "
        f"than the significance level ({alpha:g}), so we fail to reject the null "
        "hypothesis of equal variances. There was no reduction in variance."
    )


def _table(rows: List[List[str]]) -> List[str]:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for index, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if index == 0:
            lines.append("  ".join("-" * w for w in widths))
    return lines


def _render_table(report: ExperimentReport) -> str:
    spec = report.spec
    alpha = spec.get("alpha", config.DEFAULT_ALPHA)
    lines = [
        f"Model: {report.model}",
        f"Replications: {spec.get('replications')}  Horizon: {spec.get('horizon'):g} min  "
        f"Warm-up: {spec.get('warm_up', 0):g} min  alpha: {alpha:g}  "
        f"Base seed: {spec.get('base_seed')}",
        f"Control variate: {spec.get('control_variate')}",
    ]
    if report.wall_clock is not None:
        lines.append(f"Wall clock: {report.wall_clock:.1f} s")
    for measure in report.measures:
        lines += ["", measure.name]
        rows = [["group", "n", "mean", "variance", "stdev", "half-width"]]
        for label, g in measure.groups.items():
            rows.append(
                [label, str(g.n)]
                + [f"{v:.4f}" for v in (g.mean, g.variance, g.stdev, g.half_width)]
            )
        lines += _table(rows)
        lines.append(
            f"Bartlett: statistic {measure.statistic:.4f}, df {measure.df}, "
            f"p-value {measure.p_value:.4f}, decision: {measure.decision}"
        )
        lines.append(summary_sentence(measure, alpha))
    lines += ["", "Seed manifests:"]
    for label, names in report.manifests.items():
        lines.append(f"  {label}: {', '.join(names)}")
    return "\n".join(lines) + "\n"


RENDERERS = {
    ReportFormat.Csv: _render_csv,
    ReportFormat.Json: _render_json,
    ReportFormat.Table: _render_table,
}


def render_report(report: ExperimentReport, fmt) -> bytes:
    """Render a report as csv, json or a text table
    :param report: ExperimentReport
    :param fmt: ReportFormat or its string value
    :return: bytes utf-8 encoded document
    """
    try:
        fmt = ReportFormat(str(fmt))
    except ValueError:
        raise ValidationError(f"unknown report format {fmt!r}, use csv, json or table")
    return RENDERERS[fmt](report).encode("utf-8")


def render_replications(runs, measures: Iterable[str]) -> bytes:
    """One row per (group, replication) with every measure's raw value"""
    measures = list(measures)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["group", "replication", "manifest"] + measures)
    for run in runs:
        for index, (output, name) in enumerate(zip(run.outputs, run.manifest_names)):
            values = [output.measures.get(m) for m in measures]
            writer.writerow(
                [str(run.scenario), index, name]
                + ["" if v is None else repr(v) for v in values]
            )
    return out.getvalue().encode("utf-8")


def _write(path, data: bytes):
    with open(path, "wb") as f:
        f.write(data)


def write_manifest(out_directory, name, manifest):
    path = os.path.join(out_directory, name)
    text = manifest.to_text()
    if os.path.exists(path):
        with open(path) as f:
            if f.read() != text:
                logger.warning("overwriting manifest %s", path)
    with open(path, "w") as f:
        f.write(text)


def write_outputs(out_directory, report: ExperimentReport, runs, measures) -> Dict[str, str]:
    """Write every report format, the replication table and the manifests
    :return: dict file kind -> path written
    """
    out_directory = os.path.expanduser(out_directory)
    os.makedirs(os.path.join(out_directory, config.MANIFEST_DIRECTORY), exist_ok=True)
    written = {}
    for fmt, name in REPORT_FILES.items():
        path = os.path.join(out_directory, name)
        _write(path, render_report(report, fmt))
        written[str(fmt)] = path
    path = os.path.join(out_directory, config.REPLICATIONS_CSV)
    _write(path, render_replications(runs, measures))
    written["replications"] = path
    for run in runs:
        for name, manifest in zip(run.manifest_names, run.manifests):
            write_manifest(out_directory, name, manifest)
    logger.info("wrote %s", out_directory)
    return written


def render_comparison(comparison) -> str:
    lines = [
        f"{comparison.model} vs {comparison.alternative}, "
        f"{comparison.replications} replications",
        "",
    ]
    rows = [
        ["measure", "mean diff", "half-width", "Var(D) CRN", "Var(D) indep", "reduction"]
    ]
    for m in comparison.measures:
        reduction = "n/a" if m.reduction is None else f"{m.reduction * 100:.1f}%"
        rows.append(
            [
                m.name,
                f"{m.mean_difference:.4f}",
                f"{m.half_width:.4f}",
                f"{m.var_d_crn:.4f}",
                f"{m.var_d_independent:.4f}",
                reduction,
            ]
        )
    return "\n".join(lines + _table(rows)) + "\n"


def render_validation(checks) -> str:
    rows = [["check", "observed", "expected", "tolerance", "result"]]
    for c in checks:
        tolerance = f"{c.tolerance * 100:g}%" if c.relative else f"{c.tolerance:g}"
        rows.append(
            [
                c.name,
                f"{c.observed:.4f}",
                f"{c.expected:.4f}",
                tolerance,
                "pass" if c.passed else "FAIL",
            ]
        )
    return "\n".join(_table(rows)) + "\n"


@dataclass
class Scoreboard:
    """How often each technique won, across reports of different models"""

    wins: Counter = field(default_factory=Counter)
    models_reduced: Dict[str, List[str]] = field(default_factory=dict)
    measures: int = 0
    models: List[str] = field(default_factory=list)

    def add(self, report: ExperimentReport):
        self.models.append(report.model)
        for measure in report.measures:
            self.measures += 1
            if measure.winner:
                self.wins[measure.winner] += 1
                reduced = self.models_reduced.setdefault(measure.winner, [])
                if report.model not in reduced:
                    reduced.append(report.model)


def summarize(reports: Iterable[ExperimentReport]) -> Scoreboard:
    scoreboard = Scoreboard()
    for report in reports:
        scoreboard.add(report)
    return scoreboard


def render_scoreboard(scoreboard: Scoreboard) -> str:
    lines = [
        f"{len(scoreboard.models)} models, {scoreboard.measures} measures",
        "",
    ]
    rows = [["technique", "measures won", "models reduced", "models"]]
    for technique in TECHNIQUES:
        models = scoreboard.models_reduced.get(technique, [])
        rows.append(
            [
                technique,
                str(scoreboard.wins[technique]),
                f"{len(models)}/{len(scoreboard.models)}",
                ", ".join(models) or "-",
            ]
        )
    return "\n".join(lines + _table(rows)) + "\n"
