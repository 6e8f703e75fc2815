"""Command-line surface: configuration files, binary field files, property
suites, and the experiment drivers behind the console script."""

from .config import load_config, parse_config_text
from .fieldio import read_field, write_field
from .cli import main
