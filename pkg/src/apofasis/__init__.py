"""apofasis: corpus engine and citation-grounded QA for Greek public decisions."""

__version__ = "0.1.0"
