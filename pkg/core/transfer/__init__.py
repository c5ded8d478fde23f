from .policy import TransferPolicy, evaluate_agent, evaluate_transfer
from .reports import (
    AGENT_FINETUNED,
    AGENT_MAGIK,
    AGENT_SAC,
    AGENTS,
    ComparisonTable,
    TransferReport,
    compare_agents,
    format_table,
    reports_frame,
    write_reports_csv,
)
from .rules import RULE_PRESETS, MappingRule, RuleTable, preset_rules

__all__ = [
    'TransferPolicy', 'evaluate_agent', 'evaluate_transfer',
    'AGENT_FINETUNED', 'AGENT_MAGIK', 'AGENT_SAC', 'AGENTS', 'ComparisonTable', 'TransferReport', 'compare_agents',
    'format_table', 'reports_frame', 'write_reports_csv', 'RULE_PRESETS', 'MappingRule', 'RuleTable', 'preset_rules',
]
