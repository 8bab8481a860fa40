"""Dynamic contract checking for parallel programming model traces."""
from .contract_db import ContractDatabase, build_database, load_contract_text, load_database
from .contract_lang import ContractError, parse_contract, parse_contract_file, print_contract
from .coverage import RelevanceReport, check_coverage, filter_trace, mark_trace, parse_report
from .engine import Engine, TriState, check_events, init_engine
from .reports import ErrorReport
from .trace import Exit, FunctionCall, Init, Memory, SizedArg, SourceLoc, open_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "ContractDatabase", "build_database", "load_contract_text", "load_database",
    "ContractError", "parse_contract", "parse_contract_file", "print_contract",
    "RelevanceReport", "check_coverage", "filter_trace", "mark_trace", "parse_report",
    "Engine", "TriState", "check_events", "init_engine", "ErrorReport",
    "Exit", "FunctionCall", "Init", "Memory", "SizedArg", "SourceLoc", "open_trace", "save_trace",
]
