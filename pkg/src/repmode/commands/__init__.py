"""Subcommands of the ``repmode`` command line."""

# Subcommand name -> module under repmode.commands
COMMANDS = {
    "gen-data": "gen_data",
    "train": "train",
    "eval": "evaluate",
    "predict": "predict",
    "check-equiv": "check_equiv",
    "extend": "extend",
    "bench": "bench",
    "gates": "gates",
}

__all__ = ["COMMANDS"]
