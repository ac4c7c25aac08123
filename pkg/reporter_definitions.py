# Global definitions for reporting on solver results

# Format dictionaries for console output
PAYOFF_FORMAT = {'type': 'decimal', 'decimal_places': 9}
VALUE_FORMAT = {'type': 'decimal', 'decimal_places': 6}
PROBABILITY_FORMAT = {'type': 'probability', 'decimal_places': 6}
INTERVALS_FORMAT = {'type': 'interval_list', 'decimal_places': 6}
FLAG_FORMAT = {'type': 'flag'}
TEXT_FORMAT = {'type': 'text'}

# Define threshold constants
VIOLATION_THRESHOLD = [
    {'threshold': 1, 'style': None},
    {'threshold': None, 'style': 'red'}
]

AGENT_VALUE_THRESHOLD = [
    {'threshold': -1e-12, 'style': 'amber'},
    {'threshold': None, 'style': None}
]

# Define column configurations for each report type
COLUMN_CONFIGS = {
    'solve_result': {
        'headers': ['Solver', 'Form', 'Proposal Set', 'Payoff', 'λ*', 'η', 'Acceptance', 'Trustworthy', 'Candidates', 'Cells'],
        'columns': ['solver', 'form_tag', 'intervals', 'payoff', 'lambda_star', 'eta', 'acceptance_prob', 'trustworthy', 'candidates_examined', 'grid_cells'],
        'column_formats': [
            TEXT_FORMAT,  # Solver
            TEXT_FORMAT,  # Form
            INTERVALS_FORMAT,  # Proposal Set
            PAYOFF_FORMAT,  # Payoff
            VALUE_FORMAT,  # λ*
            VALUE_FORMAT,  # η
            PROBABILITY_FORMAT,  # Acceptance
            FLAG_FORMAT,  # Trustworthy
            None,  # Candidates
            None,  # Cells
        ],
        'column_thresholds': [None] * 10
    },
    'type_values': {
        'headers': ['Type λ', 'Prob', '∫ v dG on Proposal', 'Accepts'],
        'columns': ['type_lambda', 'prob', 'agent_value', 'accepts'],
        'column_formats': [VALUE_FORMAT, PROBABILITY_FORMAT, VALUE_FORMAT, FLAG_FORMAT],
        'column_thresholds': [None, None, AGENT_VALUE_THRESHOLD, None]
    },
    'menu_schedule': {
        'headers': ['Type λ', 'Prob', 'p', 'μ', 'Agent Value', 'Test', 'Form'],
        'columns': ['type_lambda', 'prob', 'p', 'mu', 'agent_value', 'intervals', 'form_tag'],
        'column_formats': [
            VALUE_FORMAT,  # Type
            PROBABILITY_FORMAT,  # Prob
            PROBABILITY_FORMAT,  # p
            VALUE_FORMAT,  # μ
            VALUE_FORMAT,  # Agent Value
            INTERVALS_FORMAT,  # Test
            TEXT_FORMAT,  # Form
        ],
        'column_thresholds': [None, None, None, None, AGENT_VALUE_THRESHOLD, None, None]
    },
    'menu_result': {
        'headers': ['Payoff', 'Top P', 'Lowest Served', 'Tests', 'p-Levels', 'Rent', 'Configurations', 'Violations'],
        'columns': ['payoff', 'top_probability', 'lowest_served', 'tests', 'levels', 'rent', 'configurations_examined', 'violations'],
        'column_formats': [PAYOFF_FORMAT, PROBABILITY_FORMAT, VALUE_FORMAT, None, None, VALUE_FORMAT, None, None],
        'column_thresholds': [None, None, None, None, None, None, None, VIOLATION_THRESHOLD]
    },
    'sufficiency': {
        'headers': ['Signals', 'Binary Payoff', 'Best Multi-signal', 'Kernels', 'Trustworthy', 'Seed', 'Binary Suffices'],
        'columns': ['signal_count', 'binary_payoff', 'max_general_payoff', 'kernels_examined', 'trustworthy_kernels', 'seed', 'holds'],
        'column_formats': [None, PAYOFF_FORMAT, PAYOFF_FORMAT, None, None, None, FLAG_FORMAT],
        'column_thresholds': [None] * 7
    },
    'notes': {
        'headers': ['Kind', 'Detail'],
        'columns': ['kind', 'detail'],
        'column_formats': [TEXT_FORMAT, TEXT_FORMAT],
        'column_thresholds': [None, None]
    },
}
