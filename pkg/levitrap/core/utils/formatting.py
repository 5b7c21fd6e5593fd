import math
from typing import Any, Iterable, Sequence

SIGNIFICANT_DIGITS = 9


def format_number(value: Any, digits: int = SIGNIFICANT_DIGITS) -> str:
    """
    Render a table cell: floats in scientific notation with ``digits`` significant digits,
    booleans as lowercase words, everything else through `str`.
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits - 1}e}"
    return str(value)


def format_table(
    header: Sequence[str], rows: Iterable[Sequence[Any]], digits: int = SIGNIFICANT_DIGITS
) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(cell, digits) for cell in row))
    return "\n".join(lines) + "\n"
