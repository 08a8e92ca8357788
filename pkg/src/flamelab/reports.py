"""Experiment configuration and machine-readable reports.

Reports serialize through the canonical JSON writer (sorted keys, floats at
12 significant digits), so identical configurations produce byte-identical
report files; wall-clock timing is printed to the console, never stored.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional

from . import __version__
from .oracles import KeyFireParams, OssParams
from .serialize import canonical_dumps

REPORT_FORMAT = 1

DEFAULT_PARAMS = {
    "n": 4, "r": 2, "k": 4,
    "att_width": 3, "sig_width": 3, "msg_width": 4,
    "j_max": 10,
}

DEFAULT_TRIALS = {
    "oss-correctness": 10_000,
    "clone-fidelity": 20,          # iteration-lemma sweep size
    "keyfire-endtoend": 1,
    "games": 100_000,              # subspace-statistics sample count
    "instance": 1,
}


def default_thresholds(experiment: str, params: dict) -> Dict[str, float]:
    j = params["j_max"]
    eps = 16 * 2 * 2.0 ** (-j)  # two simulated queries per clone
    if experiment == "oss-correctness":
        return {
            "sign_failure_bound": 2.0 ** (-j),
            "sigma_factor": 3.0,
            "verify_failures_allowed": 0,
            "sign_equivalence_tv": 0.02,
        }
    if experiment == "clone-fidelity":
        return {
            "clone_fidelity": max(1.0 - eps, 0.96),
            "exact_clone_fidelity": 1.0 - 1e-8,
            "chain_depth": 3,
            "chain_copy_fidelity": 1.0 - 5 * eps,
            "iteration_deficit": 6 * 2.0 ** (-j) + 1e-8,
            "exact_iteration_deficit": 1e-9,
            "inversion_overlap_error": 1e-9,
        }
    if experiment == "keyfire-endtoend":
        return {"tamper_acceptances_allowed": 0, "signature_mismatches_allowed": 0}
    if experiment == "games":
        return {"sigma_factor": 3.0}
    return {}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    trials: Optional[int] = None
    params: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_PARAMS))
    thresholds: Dict[str, float] = field(default_factory=dict)
    exact_sign: bool = False
    threads: int = 1
    condition_good_vk: bool = False
    require_good_vk_instance: bool = False
    instance_path: Optional[str] = None
    out_path: Optional[str] = None

    def __post_init__(self) -> None:
        merged = dict(DEFAULT_PARAMS)
        merged.update(self.params)
        self.params = merged
        if self.trials is None:
            self.trials = DEFAULT_TRIALS.get(self.experiment, 1)
        th = default_thresholds(self.experiment, self.params)
        th.update(self.thresholds)
        self.thresholds = th
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        self.keyfire_params()  # validates widths and the register budget

    def oss_params(self) -> OssParams:
        p = self.params
        return OssParams(n=p["n"], r=p["r"], k=p["k"])

    def keyfire_params(self) -> KeyFireParams:
        p = self.params
        return KeyFireParams(
            oss=self.oss_params(),
            att_width=p["att_width"],
            sig_width=p["sig_width"],
            msg_width=p["msg_width"],
            j_max=p["j_max"],
        )

    def echo(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "trials": self.trials,
            "params": dict(self.params),
            "thresholds": dict(self.thresholds),
            "exact_sign": self.exact_sign,
            "threads": self.threads,
            "condition_good_vk": self.condition_good_vk,
            "require_good_vk_instance": self.require_good_vk_instance,
            "instance_path": self.instance_path,
        }


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


@dataclass
class Check:
    name: str
    passed: bool
    observed: object
    bound: object
    direction: str  # "<=", ">=", "=="

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "observed": self.observed,
            "bound": self.bound,
            "direction": self.direction,
        }


def check_le(name: str, observed, bound) -> Check:
    return Check(name, bool(observed <= bound), observed, bound, "<=")


def check_ge(name: str, observed, bound) -> Check:
    return Check(name, bool(observed >= bound), observed, bound, ">=")


def check_eq(name: str, observed, bound) -> Check:
    return Check(name, bool(observed == bound), observed, bound, "==")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: dict
    checks: List[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def document(self) -> dict:
        return {
            "artifact": {
                "name": "flamelab",
                "version": __version__,
                "report_format": REPORT_FORMAT,
            },
            "experiment": self.config.experiment,
            "config": self.config.echo(),
            "results": self.results,
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return canonical_dumps(self.document()) + "\n"

    def save(self, path: str) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="ascii") as f:
            f.write(self.to_json())
        os.replace(tmp, path)

    def summary_lines(self) -> List[str]:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status} {c.name}: {c.observed!r} {c.direction} {c.bound!r}")
        lines.append(f"{'PASS' if self.passed else 'FAIL'} overall: {self.config.experiment}")
        return lines
