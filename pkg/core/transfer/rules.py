from typing import Dict, List, Mapping, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import RuleError


class MappingRule(BaseModel):
    """When the head predicts `when`, act on the observation imagined through `imagine_as`."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    when: int = Field(ge=1)
    imagine_as: List[int] = Field(default_factory=list)
    pass_through: bool = False

    @model_validator(mode="after")
    def _check(self) -> "MappingRule":
        if not self.pass_through and not self.imagine_as:
            raise ValueError(f"rule for class {self.when} needs imagine_as unless pass_through is set")
        if any(c < 1 for c in self.imagine_as):
            raise ValueError("class labels are 1-based")
        return self


class RuleTable(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    rules: List[MappingRule] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique(self) -> "RuleTable":
        seen = [r.when for r in self.rules]
        if len(seen) != len(set(seen)):
            raise ValueError(f"at most one rule per class, got {sorted(seen)}")
        return self

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, Sequence[int]]) -> "RuleTable":
        return cls(rules=[MappingRule(when=int(k), imagine_as=list(v)) for k, v in sorted(mapping.items())])

    def lookup(self, predicted: int) -> Optional[MappingRule]:
        for rule in self.rules:
            if rule.when == predicted:
                return rule
        return None

    def validate_classes(self, n_classes: int) -> None:
        for rule in self.rules:
            for label in [rule.when, *rule.imagine_as]:
                if label > n_classes:
                    raise RuleError(f"rule for class {rule.when} references class {label}, model has {n_classes}")

    def as_mapping(self) -> Dict[int, List[int]]:
        return {r.when: list(r.imagine_as) for r in self.rules if not r.pass_through}


# GridPick classes: 1 red only, 2 green only, 3 both, 4 neither
# Reacher classes: 1 red, 2 green, 3 blue, 4 yellow
RULE_PRESETS: Dict[str, Dict[str, Dict[int, List[int]]]] = {
    "gridpick": {
        "source": {},
        "target1": {1: [2]},
        "target2": {1: [2]},
        "target3": {1: [2], 2: [4], 3: [1, 2]},
    },
    "reacher": {
        "reach_blue": {},
        # swapped both ways: the real blue target is imagined as the task colour so it stops drawing the source policy
        "reach_red": {1: [3], 3: [1]},
        "reach_green": {2: [3], 3: [2]},
        "reach_yellow": {4: [3], 3: [4]},
    },
}


def preset_rules(env_id: str, task_id: str) -> RuleTable:
    try:
        return RuleTable.from_mapping(RULE_PRESETS[env_id][task_id])
    except KeyError:
        raise RuleError(f"No rule preset for {env_id}/{task_id}")
