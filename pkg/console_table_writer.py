"""
Console table writer for solver reports.
"""

from typing import Any, Dict, List, Optional

from tabulate import tabulate

from logger import logger


class ConsoleTableWriter:
    """Writes formatted tables to console output."""

    def write_table(self, table_data, config: Dict[str, Any]) -> None:
        """Write a table to console output.

        Args:
            table_data: List of rows from DataTableBuilder, or dict with 'title' and 'data' keys
            config: Column configuration from reporter_definitions
        """
        if isinstance(table_data, dict) and 'title' in table_data and 'data' in table_data:
            title = table_data['title']
            actual_data = table_data['data']
        else:
            title = None
            actual_data = table_data

        if not actual_data:
            print("No data to display")
            return

        if title:
            print(f"\n{title}")
            print("=" * len(title))
            print("")

        formatted_data = []
        for row in actual_data:
            formatted_data.append([self._format_for_console(cell['raw_value'], cell['format_config'], cell.get('style'))
                                   for cell in row['cells']])
        logger.debug(f"Writing table '{title}' with {len(formatted_data)} rows")
        print(tabulate(formatted_data, headers=config['headers'], tablefmt='grid'))

    def write_text(self, text: str) -> None:
        print(text)

    def _format_for_console(self, value: Any, format_config: Optional[Dict[str, Any]], style: Optional[str] = None) -> str:
        """Format a value for console output based on format configuration and style.

        Args:
            value: The value to format
            format_config: Format configuration dictionary from reporter_definitions
            style: Style name ('red' or 'amber') for color coding

        Returns:
            Formatted string for console output with optional color coding
        """
        if isinstance(value, str) and value == '':
            return ''
        if not format_config or 'type' not in format_config:
            return str(value)

        format_type = format_config['type']
        places = format_config.get('decimal_places', 6)
        if format_type == 'decimal':
            formatted_value = f"{value:.{places}f}"
        elif format_type == 'probability':
            # Clamp rounding noise below zero
            formatted_value = f"{max(float(value), 0.0):.{places}f}"
        elif format_type == 'interval_list':
            formatted_value = self._format_intervals(value, places)
        elif format_type == 'flag':
            formatted_value = 'yes' if value else 'no'
        else:
            formatted_value = str(value)

        if style:
            return self._apply_console_style(formatted_value, style)
        return formatted_value

    def _format_intervals(self, intervals: List, places: int) -> str:
        if not intervals:
            return '∅'
        return ' ∪ '.join(f"[{a:.{places}f}, {b:.{places}f}]" for a, b in intervals)

    def _apply_console_style(self, text: str, style: str) -> str:
        if style == 'red':
            return f"\033[91m{text}\033[0m"
        elif style == 'amber':
            return f"\033[93m{text}\033[0m"
        return text
