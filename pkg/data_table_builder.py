"""
DataTableBuilder - Common data preparation for console output.

Builds table data from DataFrames using configuration from reporter_definitions.py,
attaching each cell's format and threshold style so writers only have to render.
"""

import numbers
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from logger import logger


class DataTableBuilder:
    """Builds standardized table data with formatting metadata."""

    def build_table(self, df: pd.DataFrame, config: Dict[str, Any], title: str = None):
        """Build standardized table data with raw values and format metadata.

        Args:
            df: DataFrame containing the data
            config: Configuration dictionary from reporter_definitions.py
            title: Optional title for the table

        Returns:
            List of {'cells': [...]} rows, each cell holding 'raw_value', 'format_config'
            and 'style'; wrapped as {'title': ..., 'data': ...} when a title is given
        """
        if df.empty:
            return []

        logger.debug(f"Building table with {len(df)} rows using config: {config.get('headers', [])}")

        table_data = []
        for _, row in df.iterrows():
            row_data = []
            for col_idx, col_name in enumerate(config['columns']):
                if col_name in row.index:
                    raw_value = row[col_name]
                else:
                    raw_value = None
                    logger.debug(f"Column {col_name} not found in DataFrame, using None")

                format_config = config['column_formats'][col_idx] if col_idx < len(config['column_formats']) else None
                threshold_config = config['column_thresholds'][col_idx] if col_idx < len(config['column_thresholds']) else None
                row_data.append(self._build_cell_data(raw_value, format_config, threshold_config))
            table_data.append({'cells': row_data})

        logger.debug(f"Built table with {len(table_data)} rows")

        if title:
            return {'title': title, 'data': table_data}
        return table_data

    def _build_cell_data(self, raw_value: Any, format_config: Optional[Dict],
                         threshold_config: Optional[List[Dict[str, Any]]]) -> Dict[str, Any]:
        # Interval lists are sequences, so they skip the missing-value check
        if not isinstance(raw_value, (tuple, list)) and (raw_value is None or pd.isna(raw_value)):
            return {'raw_value': '', 'format_config': None, 'style': None}

        return {
            'raw_value': raw_value,
            'format_config': format_config,
            'style': self._determine_style(raw_value, threshold_config),
        }

    def _determine_style(self, value: Any, threshold_config: Optional[List[Dict[str, Any]]]) -> Optional[str]:
        """Style of the first threshold the value falls below ('red', 'amber' or None)."""
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Real):
            return None
        if not threshold_config:
            return None

        for threshold_dict in threshold_config:
            threshold = threshold_dict['threshold']
            if threshold is None or value < threshold:
                return threshold_dict['style']
        return None
