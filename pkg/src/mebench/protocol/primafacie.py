"""The mono- vs mixed-ethnicity controlled comparison.

Subjects are sampled at the subject level (without replacement, seeded)
under one of three scenarios: 16 Asian subjects, 16 non-Asian subjects,
or a balanced 8 + 8 mix. Emotions are binarized to Negative versus
NonNegative to blunt class imbalance. Each scenario is scored with
frozen features, a random forest retrained per LOSO fold, and pooled
per-class F1; multiple sampling seeds expose the variance a single
table cannot show.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..corpus import Manifest, MappedEmotion, MappedEthnicity, SampleRecord
from ..errors import DataError
from ..pipeline import BINARY_CLASSES
from ..runutil import derive_seed, derived_rng, stable_hash
from .folds import plan_loso
from .forest import ForestConfig, forest_predict_batch, forest_train
from .metrics import ConfusionMatrix, FoldResult, aggregate_folds


class QuotaError(DataError):
    """Scenario subject quota cannot be met by the manifest."""


class ScenarioKind(enum.Enum):
    ASIAN_ONLY = "AsianOnly"
    NON_ASIAN_ONLY = "NonAsianOnly"
    MIXED = "Mixed"


@dataclass(frozen=True)
class PrimaFacieScenario:
    kind: ScenarioKind
    subject_budget: int = 16
    per_group_quota: int = 8  # used by Mixed
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "subject_budget": self.subject_budget,
            "per_group_quota": self.per_group_quota,
            "seed": self.seed,
        }


def _subjects_by_group(records: list[SampleRecord]) -> dict:
    groups: dict[str, set] = {"Asian": set(), "NonAsian": set()}
    for record in records:
        groups[record.mapped_ethnicity.value].add(record.subject_id)
    return {k: sorted(v) for k, v in groups.items()}


def sample_prima_facie(manifest: Manifest, scenario: PrimaFacieScenario) -> list[SampleRecord]:
    """Seeded subject-level sample of the eligible records."""
    eligible = manifest.eligible()
    groups = _subjects_by_group(eligible)
    rng = derived_rng(scenario.seed, "prima-facie", scenario.kind.value)

    if scenario.kind == ScenarioKind.MIXED:
        quotas = {"Asian": scenario.per_group_quota, "NonAsian": scenario.per_group_quota}
    elif scenario.kind == ScenarioKind.ASIAN_ONLY:
        quotas = {"Asian": scenario.subject_budget}
    else:
        quotas = {"NonAsian": scenario.subject_budget}

    chosen: list[str] = []
    for group, quota in quotas.items():
        pool = groups[group]
        if len(pool) < quota:
            raise QuotaError(
                f"scenario {scenario.kind.value} needs {quota} {group} subjects, manifest has {len(pool)}"
            )
        picked = rng.choice(len(pool), size=quota, replace=False)
        chosen.extend(pool[i] for i in sorted(picked))
    chosen_set = set(chosen)
    return [r for r in eligible if r.subject_id in chosen_set]


def binarize_emotions(records: list[SampleRecord]) -> list[int]:
    """Label per record in BINARY_CLASSES order: Negative=0, NonNegative=1."""
    labels = []
    for record in records:
        if not record.eligible:
            raise DataError(f"record {record.key} is excluded; binarize eligible views only")
        labels.append(0 if record.mapped_emotion == MappedEmotion.NEGATIVE else 1)
    return labels


@dataclass
class ScenarioResult:
    kind: str
    seed: int
    f1_negative: float
    f1_nonnegative: float

    @property
    def average(self) -> float:
        return (self.f1_negative + self.f1_nonnegative) / 2.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "Negative": self.f1_negative,
            "NonNegative": self.f1_nonnegative,
            "Average": self.average,
        }


@dataclass
class PrimaFacieReport:
    """Rows AsianOnly / NonAsianOnly / Mixed; columns Negative / NonNegative / Average."""

    per_seed: list = field(default_factory=list)  # ScenarioResult
    forest_config: dict = field(default_factory=dict)
    encoder_origin: str = ""
    provenance_hash: str = ""

    def mean_rows(self) -> list[dict]:
        rows = []
        for kind in ScenarioKind:
            results = [r for r in self.per_seed if r.kind == kind.value]
            if not results:
                continue
            neg = float(np.mean([r.f1_negative for r in results]))
            nonneg = float(np.mean([r.f1_nonnegative for r in results]))
            rows.append(
                {
                    "kind": kind.value,
                    "Negative": neg,
                    "NonNegative": nonneg,
                    "Average": (neg + nonneg) / 2.0,
                    "n_seeds": len(results),
                }
            )
        return rows

    def to_markdown(self) -> str:
        lines = [
            "| Train/Test | Negative | Non-negative | Average |",
            "|---|---|---|---|",
        ]
        for row in self.mean_rows():
            lines.append(
                f"| {row['kind']} | {row['Negative']:.4f} | {row['NonNegative']:.4f} | {row['Average']:.4f} |"
            )
        return "\n".join(lines)

    def to_tsv(self) -> str:
        lines = ["scenario\tNegative\tNonNegative\tAverage\tn_seeds"]
        for row in self.mean_rows():
            lines.append(
                f"{row['kind']}\t{row['Negative']:.6f}\t{row['NonNegative']:.6f}"
                f"\t{row['Average']:.6f}\t{row['n_seeds']}"
            )
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "rows": self.mean_rows(),
            "per_seed": [r.to_dict() for r in self.per_seed],
            "forest_config": self.forest_config,
            "encoder_origin": self.encoder_origin,
            "provenance_hash": self.provenance_hash,
        }


def run_scenario(
    manifest: Manifest,
    scenario: PrimaFacieScenario,
    features: dict,
    forest_config: ForestConfig,
) -> ScenarioResult:
    """One scenario at one sampling seed: sample -> binarize -> LOSO forest."""
    records = sample_prima_facie(manifest, scenario)
    labels = binarize_emotions(records)
    by_key = {f"{r.dataset.value}:{r.subject_id}:{r.clip_id}": i for i, r in enumerate(records)}
    feats = np.stack([features[k] for k in by_key])
    label_arr = np.array(labels)

    fold_results = []
    for fold in plan_loso(records):
        train_idx = [by_key[k] for k in fold.train_keys]
        test_idx = [by_key[k] for k in fold.test_keys]
        model = forest_train(
            feats[train_idx],
            label_arr[train_idx],
            forest_config,
            seed=derive_seed(scenario.seed, "forest", scenario.kind.value, fold.held_out_subject),
        )
        predictions = forest_predict_batch(model, feats[test_idx])
        confusion = ConfusionMatrix(BINARY_CLASSES)
        for idx, pred in zip(test_idx, predictions):
            confusion.add(BINARY_CLASSES[label_arr[idx]], BINARY_CLASSES[min(int(pred), 1)])
        fold_results.append(FoldResult(held_out_subject=fold.held_out_subject, confusion=confusion))

    report = aggregate_folds(fold_results)
    return ScenarioResult(
        kind=scenario.kind.value,
        seed=scenario.seed,
        f1_negative=report.per_class_f1["Negative"],
        f1_nonnegative=report.per_class_f1["NonNegative"],
    )


def run_prima_facie(
    manifest: Manifest,
    features: dict,
    seeds: list[int],
    forest_config: ForestConfig | None = None,
    scenario_kinds: list[ScenarioKind] | None = None,
    subject_budget: int = 16,
    encoder_origin: str = "",
) -> PrimaFacieReport:
    """Full study: every scenario at every seed, mean rows across seeds.

    `features` maps sample keys (dataset:subject:clip) to fixed-length
    frozen feature vectors.
    """
    forest_config = forest_config or ForestConfig()
    kinds = scenario_kinds or list(ScenarioKind)
    report = PrimaFacieReport(
        forest_config=forest_config.to_dict(),
        encoder_origin=encoder_origin,
        provenance_hash=stable_hash(
            {
                "forest": forest_config.to_dict(),
                "seeds": list(seeds),
                "budget": subject_budget,
                "kinds": [k.value for k in kinds],
                "manifest": manifest.provenance,
            }
        ),
    )
    for seed in seeds:
        for kind in kinds:
            scenario = PrimaFacieScenario(
                kind=kind,
                subject_budget=subject_budget,
                per_group_quota=subject_budget // 2,
                seed=seed,
            )
            report.per_seed.append(run_scenario(manifest, scenario, features, forest_config))
    return report
