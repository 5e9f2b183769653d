"""
@file experiment.py
@brief Runs the four-group variance reduction experiment on a model
@details
An experiment runs the same model under up to four treatments:

  Base  one shared stream per replication, every source draws from it
  CRN   one dedicated stream per source
  AV    replications paired (2k, 2k+1); the odd member replays the even
        member's streams with complemented uniforms, the pair average is one
        observation
  CV    dedicated streams in their own seed space; each measure is adjusted
        by its linear dependence on the model's control variate

For every analyzed measure the group series go through Bartlett's test and
the variance-minimizing technique is named when the test rejects.

Replications may run in worker processes. Results are always assembled by
replication index, so the worker count never changes a report.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from desvar import config
from desvar.errors import ManifestConflictError, ValidationError
from desvar.estimators import (
    CvInput,
    PairedSeries,
    av_pair_series,
    crn_difference_variance,
    cv_adjust,
)
from desvar.kernel import ReplicationOutput, run_replication
from desvar.logging import logger
from desvar.model_config import (
    StopRule,
    apply_overrides,
    parse_model_config,
    read_tree,
    to_minutes,
)
from desvar.models import Model, build_model, load_model, resolve_path
from desvar.report import ExperimentReport, GroupSummary, MeasureReport
from desvar.stats import (
    BartlettResult,
    Decision,
    GroupSet,
    bartlett_test,
    ci_halfwidth,
    sample_moments,
)
from desvar.streams import (
    SeedManifest,
    VrtScenario,
    check_seed,
    manifest_for_scenario,
    manifest_name,
)

# Seed space of the alternative configuration when it does not share streams
INDEPENDENT_NAMESPACE = "independent"
VALIDATION_NAMESPACE = "validation"

NOTE_VARIANCE_INCREASED = "variance increased"


def default_jobs() -> int:
    jobs = os.getenv("DESVAR_JOBS", "1")
    try:
        return max(1, int(jobs))
    except ValueError:
        raise ValidationError(f"DESVAR_JOBS must be an integer, got {jobs!r}")


@dataclass
class ExperimentSpec:
    path: str
    model_path: str
    model: Model
    replications: int = config.DEFAULT_REPLICATIONS
    horizon: Optional[float] = None
    stop_rule: Optional[StopRule] = None
    alpha: float = config.DEFAULT_ALPHA
    groups: List[VrtScenario] = field(default_factory=lambda: list(VrtScenario))
    measures: List[str] = field(default_factory=list)
    control_variate: str = ""
    expected_control: Optional[float] = None
    base_seed: int = config.DEFAULT_BASE_SEED
    model_overrides: list = field(default_factory=list)
    compare_overrides: list = field(default_factory=list)
    compare_label: str = "alternative"

    @property
    def run_horizon(self) -> float:
        return self.model.config.horizon if self.horizon is None else self.horizon

    def echo(self) -> Dict:
        """Experiment settings as written into reports"""
        return {
            "model": self.model_path,
            "model_name": self.model.name,
            "replications": self.replications,
            "horizon": self.run_horizon,
            "stop_rule": str(self.stop_rule or self.model.config.stop_rule),
            "warm_up": self.model.config.warm_up,
            "alpha": self.alpha,
            "groups": [str(g) for g in self.groups],
            "measures": list(self.measures),
            "control_variate": self.control_variate,
            "base_seed": self.base_seed,
        }


def _enum_list(raw, where):
    try:
        return [VrtScenario(g) for g in raw]
    except ValueError:
        raise ValidationError(f"{where}: groups must be among Base, CRN, AV, CV, got {raw}")


def _number(tree, key, default, where):
    value = tree.get(key, default)
    if value is None and default is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: {key} must be a number, got {value!r}")
    return float(value)


def load_spec(path: str, base_seed: Optional[int] = None) -> ExperimentSpec:
    """Read and validate an experiment file
    :param path: str experiment file, resolved like model files
    :param base_seed: int optional override of the file's base seed
    :return: ExperimentSpec
    """
    path = resolve_path(path)
    tree = read_tree(path)
    if "model" not in tree:
        raise ValidationError(f"{path}: missing required field 'model'")
    model_overrides = tree.get("overrides", [])
    model = load_model(tree["model"], model_overrides, relative_to=path)
    model_config = model.config

    stop_rule = None
    if "stop_rule" in tree:
        try:
            stop_rule = StopRule(tree["stop_rule"])
        except ValueError:
            raise ValidationError(f"{path}: unknown stop_rule {tree['stop_rule']!r}")
    horizon = to_minutes(tree["horizon"]) if "horizon" in tree else None
    compare = tree.get("compare", {})

    spec = ExperimentSpec(
        path=path,
        model_path=tree["model"],
        model=model,
        replications=tree.get("replications", config.DEFAULT_REPLICATIONS),
        horizon=horizon,
        stop_rule=stop_rule,
        alpha=_number(tree, "alpha", config.DEFAULT_ALPHA, path),
        groups=_enum_list(tree.get("groups", [str(g) for g in VrtScenario]), path),
        measures=list(tree.get("measures", [])),
        control_variate=tree.get("control_variate", model_config.control_variate.name),
        expected_control=_number(tree, "expected_control", None, path),
        base_seed=check_seed(tree.get("base_seed", config.DEFAULT_BASE_SEED)),
        model_overrides=model_overrides,
        compare_overrides=compare.get("overrides", []),
        compare_label=compare.get("label", "alternative"),
    )
    if base_seed is not None:
        spec.base_seed = check_seed(base_seed)
    validate_spec(spec)
    return spec


def validate_spec(spec: ExperimentSpec):
    if isinstance(spec.replications, bool) or not isinstance(spec.replications, int):
        raise ValidationError(f"replications must be an integer, got {spec.replications!r}")
    if spec.replications < 2:
        raise ValidationError(f"at least 2 replications are needed, got {spec.replications}")
    if VrtScenario.AV in spec.groups and spec.replications % 2:
        raise ValidationError(
            f"antithetic pairs need an even number of replications, got {spec.replications}"
        )
    if VrtScenario.AV in spec.groups and spec.replications < 4:
        raise ValidationError("antithetic variates need at least 2 pairs, i.e. 4 replications")
    if len(set(spec.groups)) != len(spec.groups) or len(spec.groups) < 2:
        raise ValidationError("an experiment compares at least two distinct groups")
    if not 0.0 < spec.alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {spec.alpha}")
    if spec.horizon is not None and spec.horizon <= 0:
        raise ValidationError("horizon must be positive")
    if not spec.measures:
        raise ValidationError("an experiment analyzes at least one measure")
    known = spec.model.measure_names()
    for name in spec.measures + [spec.control_variate]:
        if name not in known:
            raise ValidationError(
                f"unknown measure {name!r}, {spec.model.name} records {', '.join(known)}"
            )
    if spec.control_variate in spec.measures:
        raise ValidationError(
            f"control variate {spec.control_variate!r} is also an analyzed measure"
        )


@dataclass
class GroupRun:
    scenario: VrtScenario
    manifests: List[SeedManifest]
    outputs: List[ReplicationOutput]

    @property
    def manifest_names(self) -> List[str]:
        return [manifest_name(self.scenario, r) for r in range(len(self.manifests))]

    def values(self, measure: str) -> List[float]:
        return [output.value(measure) for output in self.outputs]


def _replicate(task):
    model, manifest, horizon, stop_rule = task
    return run_replication(model, manifest, horizon, stop_rule)


def run_replications(tasks: Sequence, jobs: int = 1) -> List[ReplicationOutput]:
    """Run (model, manifest, horizon, stop_rule) tasks, results in task order"""
    if jobs <= 1 or len(tasks) <= 1:
        return [_replicate(task) for task in tasks]
    results = [None] * len(tasks)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(_replicate, task): index for index, task in enumerate(tasks)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results


def group_manifests(spec: ExperimentSpec, scenario: VrtScenario) -> List[SeedManifest]:
    return [
        manifest_for_scenario(spec.model.sources, scenario, spec.base_seed, r)
        for r in range(spec.replications)
    ]


def audit_seed_spaces(runs: Sequence[GroupRun]):
    """Groups must never share a stream seed"""
    owners = {}
    for run in runs:
        for seed in set().union(*(m.seeds() for m in run.manifests)):
            other = owners.setdefault(seed, run.scenario)
            if other is not run.scenario:
                raise ManifestConflictError(
                    f"manifest conflict: seed {seed} used by both {other} and {run.scenario}"
                )


def run_groups(spec: ExperimentSpec, jobs: int = 1) -> List[GroupRun]:
    manifests = {scenario: group_manifests(spec, scenario) for scenario in spec.groups}
    tasks = [
        (spec.model, manifest, spec.run_horizon, spec.stop_rule)
        for scenario in spec.groups
        for manifest in manifests[scenario]
    ]
    logger.info(
        "running %d replications of %s (%d jobs)", len(tasks), spec.model.name, jobs
    )
    outputs = run_replications(tasks, jobs)
    runs = []
    for index, scenario in enumerate(spec.groups):
        chunk = outputs[index * spec.replications : (index + 1) * spec.replications]
        runs.append(GroupRun(scenario, manifests[scenario], chunk))
    audit_seed_spaces(runs)
    return runs


@dataclass
class Ranking:
    decision: Decision
    winner: Optional[VrtScenario] = None
    note: Optional[str] = None


def decide_and_rank(
    variances: Dict[VrtScenario, float], bartlett: BartlettResult, alpha: float
) -> Ranking:
    """Decide at alpha and pick the variance reduction technique that won
    :param variances: dict VrtScenario -> group sample variance
    :param bartlett: BartlettResult over the same groups
    :param alpha: float significance level
    :return: Ranking, winner only under rejection and only below Base
    """
    decision = bartlett.decision_at(alpha)
    if decision is Decision.FailToReject:
        return Ranking(decision)
    techniques = {g: v for g, v in variances.items() if g is not VrtScenario.Base}
    if not techniques:
        return Ranking(decision)
    # Ties go to the first group in Base, CRN, AV, CV order
    best = min(techniques, key=lambda g: (techniques[g], list(VrtScenario).index(g)))
    base = variances.get(VrtScenario.Base)
    if base is not None and techniques[best] >= base:
        return Ranking(decision, note=NOTE_VARIANCE_INCREASED)
    return Ranking(decision, winner=best)


def group_series(spec: ExperimentSpec, run: GroupRun, measure: str):
    """Observations of one measure in one group, plus estimator details"""
    values = run.values(measure)
    if run.scenario is VrtScenario.AV:
        pairs = PairedSeries(list(zip(values[0::2], values[1::2])))
        result = av_pair_series(pairs)
        return result.y_series, {
            "var_x": result.var_x,
            "var_x_antithetic": result.var_xp,
            "cov": result.cov,
        }
    if run.scenario is VrtScenario.CV:
        result = cv_adjust(
            CvInput(values, run.values(spec.control_variate), spec.expected_control)
        )
        return result.adjusted_series, {
            "a_hat": result.a_hat,
            "correlation": result.correlation,
            "expected_x": result.expected_x,
            "var_raw": result.var_raw,
        }
    return values, {}


def analyze_measure(spec: ExperimentSpec, runs: Sequence[GroupRun], measure: str):
    series = {}
    details = {}
    for run in runs:
        series[run.scenario], extra = group_series(spec, run, measure)
        if extra:
            details[str(run.scenario)] = extra

    summaries = {}
    for scenario, values in series.items():
        moments = sample_moments(values)
        summaries[str(scenario)] = GroupSummary(
            n=moments.n,
            mean=moments.mean,
            variance=moments.variance,
            stdev=moments.stdev,
            half_width=ci_halfwidth(values, spec.alpha),
        )
    bartlett = bartlett_test(GroupSet({str(g): v for g, v in series.items()}))
    ranking = decide_and_rank(
        {g: summaries[str(g)].variance for g in series}, bartlett, spec.alpha
    )
    logger.debug(
        "%s: statistic %.4f p %.4f %s", measure, bartlett.statistic, bartlett.p_value,
        ranking.decision,
    )
    return MeasureReport(
        name=measure,
        groups=summaries,
        statistic=bartlett.statistic,
        df=bartlett.df,
        p_value=bartlett.p_value,
        decision=str(ranking.decision),
        winner=str(ranking.winner) if ranking.winner else None,
        note=ranking.note,
        details=details,
    )


def run_experiment(spec: ExperimentSpec, jobs: int = 1):
    """Run every group and analyze every measure
    :param spec: ExperimentSpec
    :param jobs: int worker processes
    :return: (ExperimentReport, list(GroupRun))
    """
    started = time.perf_counter()
    runs = run_groups(spec, jobs)
    measures = [analyze_measure(spec, runs, name) for name in spec.measures]
    report = ExperimentReport(
        model=spec.model.name,
        spec=spec.echo(),
        measures=measures,
        manifests={str(run.scenario): run.manifest_names for run in runs},
        wall_clock=time.perf_counter() - started,
    )
    logger.info("%s finished in %.1f s", spec.model.name, report.wall_clock)
    return report, runs


@dataclass
class ComparisonMeasure:
    name: str
    mean_difference: float
    half_width: float
    var_d_crn: float
    var_d_independent: float
    cov_crn: float
    cov_independent: float

    @property
    def reduction(self) -> Optional[float]:
        """Fraction of Var(D) removed by synchronized streams"""
        if self.var_d_independent <= 0:
            return None
        return 1.0 - self.var_d_crn / self.var_d_independent


@dataclass
class Comparison:
    model: str
    alternative: str
    replications: int
    measures: List[ComparisonMeasure]


def alternative_model(spec: ExperimentSpec) -> Model:
    if not spec.compare_overrides:
        raise ValidationError(f"{spec.path} has no compare overrides")
    tree = read_tree(resolve_path(spec.model_path, spec.path))
    tree = apply_overrides(tree, list(spec.model_overrides) + list(spec.compare_overrides))
    return build_model(parse_model_config(tree))


def compare(spec: ExperimentSpec, jobs: int = 1) -> Comparison:
    """Two configurations under synchronized and under independent streams
    :param spec: ExperimentSpec with compare overrides
    :param jobs: int worker processes
    :return: Comparison, per analyzed and control measure
    """
    baseline = spec.model
    alternative = alternative_model(spec)
    sources = list(baseline.sources)
    sources += [s for s in alternative.sources if s not in sources]

    shared, independent = [], []
    for r in range(spec.replications):
        shared.append(
            manifest_for_scenario(sources, VrtScenario.CRN, spec.base_seed, r)
        )
        independent.append(
            manifest_for_scenario(
                sources, VrtScenario.CRN, spec.base_seed, r, INDEPENDENT_NAMESPACE
            )
        )
    horizon, stop_rule = spec.run_horizon, spec.stop_rule
    tasks = [(baseline, m, horizon, stop_rule) for m in shared]
    tasks += [(alternative, m, horizon, stop_rule) for m in shared]
    tasks += [(alternative, m, horizon, stop_rule) for m in independent]
    outputs = run_replications(tasks, jobs)
    n = spec.replications
    base_out, crn_out, ind_out = outputs[:n], outputs[n : 2 * n], outputs[2 * n :]

    measures = []
    for name in spec.measures + [spec.control_variate]:
        base_values = [o.value(name) for o in base_out]
        crn = crn_difference_variance(
            PairedSeries.from_series(base_values, [o.value(name) for o in crn_out])
        )
        ind = crn_difference_variance(
            PairedSeries.from_series(base_values, [o.value(name) for o in ind_out])
        )
        measures.append(
            ComparisonMeasure(
                name=name,
                mean_difference=sample_moments(crn.d_series).mean,
                half_width=ci_halfwidth(crn.d_series, spec.alpha),
                var_d_crn=crn.var_d,
                var_d_independent=ind.var_d,
                cov_crn=crn.cov_ab,
                cov_independent=ind.cov_ab,
            )
        )
    return Comparison(baseline.name, spec.compare_label, n, measures)


@dataclass
class ValidationCheck:
    name: str
    observed: float
    expected: float
    tolerance: float
    relative: bool = False

    @property
    def passed(self) -> bool:
        error = abs(self.observed - self.expected)
        if self.relative:
            return error <= self.tolerance * abs(self.expected)
        return error <= self.tolerance


MM1_UTILIZATION = "Server Utilization"
MM1_WAIT = "Queue Wait Time"
MM1_TIME_IN_SYSTEM = "Time In System"
MM1_WIP = "Number In System"


def validate_mm1(
    model: Model,
    replications: int = config.DEFAULT_REPLICATIONS,
    base_seed: int = config.DEFAULT_BASE_SEED,
    jobs: int = 1,
) -> List[ValidationCheck]:
    """Check the kernel against M/M/1 closed forms and Little's law"""
    cfg = model.config
    arrival = cfg.arrivals.interarrival
    station = cfg.stations[0]
    service = cfg.entity_types[0].route[0].process
    if arrival is None or len(station.resources) != 1:
        raise ValidationError("M/M/1 validation needs renewal arrivals and one server")
    lam = 1.0 / arrival.mean
    mu = 1.0 / (service.mean * station.resources[0].multiplier)
    rho = lam / mu
    if rho >= 1.0:
        raise ValidationError(f"the queue is unstable, utilization {rho:.3f}")

    manifests = [
        manifest_for_scenario(
            model.sources, VrtScenario.CRN, base_seed, r, VALIDATION_NAMESPACE
        )
        for r in range(replications)
    ]
    outputs = run_replications([(model, m, None, None) for m in manifests], jobs)

    def mean_of(name):
        return sum(o.value(name) for o in outputs) / len(outputs)

    little = [
        o.value(MM1_WIP) / (lam * o.value(MM1_TIME_IN_SYSTEM)) for o in outputs
    ]
    checks = [
        ValidationCheck("utilization", mean_of(MM1_UTILIZATION), rho, 0.02),
        ValidationCheck("queue wait", mean_of(MM1_WAIT), rho / (mu - lam), 0.1),
        ValidationCheck("little's law", sum(little) / len(little), 1.0, 0.05, relative=True),
    ]
    for check in checks:
        logger.debug(
            "%s: observed %.4f expected %.4f (%s)",
            check.name,
            check.observed,
            check.expected,
            "ok" if check.passed else "FAILED",
        )
    return checks
