"""Two-step validation protocol, reports and plot data."""

from .protocol import (
    ExternalVariable,
    ProtocolConfig,
    Seal,
    SealedData,
    Selection,
    ValidationContext,
    ValidationReport,
    optimism_gap,
    run_protocol,
    select_method,
    validate_external,
    validate_internal,
    validate_stability,
    validate_visual,
)
from .report import report_json, report_markdown, write_report
