from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from core.sac.training import EpisodeStats

AGENT_SAC = "SAC"
AGENT_FINETUNED = "SAC-Fine tuned"
AGENT_MAGIK = "MAGIK"
AGENTS = (AGENT_SAC, AGENT_FINETUNED, AGENT_MAGIK)

REPORT_COLUMNS = ("agent", "env", "task", "colour", "mean", "std", "n_seeds", "n_episodes")


@dataclass
class TransferReport:
    """Per-colour success counts of one agent on one task, one row per seed."""

    agent: str
    env_id: str
    task_id: str
    n_episodes: int
    per_seed: pd.DataFrame

    @classmethod
    def from_stats(cls, agent: str, env_id: str, task_id: str, seeds: Sequence[int], stats: Sequence[EpisodeStats]) -> "TransferReport":
        rows = [{"seed": seed, **s.counts()} for seed, s in zip(seeds, stats)]
        return cls(agent, env_id, task_id, stats[0].n_episodes, pd.DataFrame(rows))

    @property
    def colours(self) -> List[str]:
        return [c for c in self.per_seed.columns if c != "seed"]

    def mean(self, colour: str) -> float:
        return float(self.per_seed[colour].mean())

    def std(self, colour: str) -> float:
        """Sample standard deviation across seeds, 0 for a single seed."""
        if len(self.per_seed) < 2:
            return 0.0
        return float(self.per_seed[colour].std(ddof=1))

    def cell(self, colour: str) -> str:
        return f"{self.mean(colour):.2f} ± {self.std(colour):.2f}"

    def summary_text(self) -> str:
        return ", ".join(f"{c} {self.cell(c)}/{self.n_episodes}" for c in self.colours)

    def rows(self) -> List[Dict[str, object]]:
        return [
            {
                "agent": self.agent, "env": self.env_id, "task": self.task_id, "colour": c,
                "mean": self.mean(c), "std": self.std(c), "n_seeds": len(self.per_seed), "n_episodes": self.n_episodes,
            }
            for c in self.colours
        ]


def reports_frame(reports: Sequence[TransferReport]) -> pd.DataFrame:
    return pd.DataFrame([row for r in reports for row in r.rows()], columns=list(REPORT_COLUMNS))


def write_reports_csv(reports: Sequence[TransferReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    reports_frame(reports).to_csv(path, index=False, encoding="utf-8", float_format="%.4f")
    return path


def format_table(reports: Sequence[TransferReport]) -> str:
    """Text table: one line per task and agent, one "mean ± std" column per colour."""
    if not reports:
        return ""
    colours: List[str] = []
    for r in reports:
        colours.extend(c for c in r.colours if c not in colours)
    header = ["Task", "Agent", *[f"{c} (out of {reports[0].n_episodes})" for c in colours]]
    body = [
        [r.task_id, r.agent, *[r.cell(c) if c in r.colours else "-" for c in colours]]
        for r in sorted(reports, key=lambda r: (r.task_id, AGENTS.index(r.agent) if r.agent in AGENTS else len(AGENTS)))
    ]
    widths = [max(len(str(line[i])) for line in [header, *body]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*["-" * w for w in widths])]
    lines.extend(fmt.format(*line) for line in body)
    return "\n".join(lines)


@dataclass
class ComparisonTable:
    table: pd.DataFrame
    budget: pd.DataFrame
    missing: List[Tuple[str, str]] = field(default_factory=list)

    def to_text(self) -> str:
        text = self.table.to_string(index=False)
        if self.missing:
            text += "\nmissing: " + ", ".join(f"{agent} on {task}" for agent, task in self.missing)
        return text


def compare_agents(
    reports: Sequence[TransferReport],
    label_budget: Optional[int] = None,
    finetune_steps: Optional[Mapping[str, Optional[int]]] = None,
    n_collected: Optional[int] = None,
) -> ComparisonTable:
    """Side-by-side agent columns per task and colour, plus label vs interaction accounting.

    `finetune_steps` maps task to the fine-tuning interactions spent (steps to
    threshold when reached). `label_fraction` divides the label budget by
    `n_collected`, the observations streamed before any record cap.
    Missing agent rows are reported, not fatal.
    """
    frame = reports_frame(reports)
    tasks = list(dict.fromkeys(frame["task"]))
    missing = [(agent, task) for task in tasks for agent in AGENTS if not ((frame["agent"] == agent) & (frame["task"] == task)).any()]
    for agent, task in missing:
        logger.warning(f"compare_agents: no {agent} report for {task}")

    cells = frame.assign(value=[f"{m:.2f} ± {s:.2f}" for m, s in zip(frame["mean"], frame["std"])])
    table = cells.pivot_table(index=["task", "colour"], columns="agent", values="value", aggfunc="first").reset_index()
    for agent in AGENTS:
        if agent not in table.columns:
            table[agent] = "-"
    table = table[["task", "colour", *AGENTS]].fillna("-")
    table.columns.name = None

    finetune_steps = finetune_steps or {}
    budget_rows = []
    for task in tasks:
        steps = finetune_steps.get(task)
        budget_rows.append({
            "task": task,
            "magik_labels": label_budget,
            "finetune_interactions": steps,
            "interactions_per_label": (steps / label_budget) if steps and label_budget else np.nan,
            "label_fraction": (label_budget / n_collected) if label_budget and n_collected else np.nan,
        })
    budget = pd.DataFrame(budget_rows, columns=["task", "magik_labels", "finetune_interactions", "interactions_per_label", "label_fraction"])
    return ComparisonTable(table=table, budget=budget, missing=missing)
