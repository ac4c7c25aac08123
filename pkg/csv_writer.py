"""
CSV writer for plot data.
"""

import csv
from pathlib import Path
from typing import Any

import pandas as pd

from logger import logger


class CSVWriter:
    """Writes per-cell plot data to CSV."""

    def __init__(self, output_filepath: str):
        """Initialize the CSV writer.

        Args:
            output_filepath: Path where CSV file should be written
        """
        self.output_filepath = Path(output_filepath)
        logger.info(f"Initialized CSVWriter for: {self.output_filepath}")

    def write_cell_rows(self, df: pd.DataFrame) -> None:
        """Write one row per grid cell.

        Args:
            df: DataFrame with columns cell_lo, cell_hi, one or more indicator columns,
                u and v_<λ> per type. Indicators are written as fractions in [0, 1]
        """
        if df.empty:
            logger.warning("No data to write to CSV")
            return

        logger.info(f"Writing cell CSV with {len(df)} rows and {len(df.columns)} columns")

        try:
            with open(self.output_filepath, 'w', newline='', encoding='utf-8') as csvfile:
                writer = csv.writer(csvfile)
                writer.writerow(list(df.columns))
                for _, row in df.iterrows():
                    writer.writerow([self._format_number(row[col]) for col in df.columns])

            logger.info(f"Successfully wrote CSV to: {self.output_filepath}")

        except Exception as e:
            logger.error(f"Error writing CSV file: {str(e)}")
            raise

    def _format_number(self, value: Any) -> str:
        """Plain number with enough digits to round-trip a double."""
        if value is None or pd.isna(value):
            return ''

        try:
            return f"{float(value):.17g}"
        except (ValueError, TypeError):
            logger.warning(f"Could not format value as number: {value}")
            return ''
