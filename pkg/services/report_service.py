import logging
from typing import Dict, Optional, Sequence

import yaml

from config.settings import settings
from models.reports import FitReport
from utils.helpers import format_datetime, format_sig

logger = logging.getLogger(__name__)


class ReportFormatter:
    """Formats the plain-text run summary from templates.yaml"""

    def __init__(self, templates_file: Optional[str] = None, digits: int = 6):
        self.templates_file = templates_file or settings.TEMPLATES_FILE
        self.digits = digits
        self.templates = {}
        self.load_templates()

    def load_templates(self):
        """Load templates from YAML file"""
        try:
            with open(self.templates_file, 'r', encoding='utf-8') as file:
                data = yaml.safe_load(file)

            if not data or 'templates' not in data:
                raise ValueError("Templates file must contain 'templates' key")

            self.templates = data['templates']
            logger.info(f"Loaded {len(self.templates)} templates")

        except Exception as e:
            logger.error(f"Error loading templates: {e}")
            self.templates = self._get_default_templates()

    def get_template(self, template_key: str) -> str:
        if template_key not in self.templates:
            logger.warning(f"Template '{template_key}' not found")
            return self._get_default_templates().get(template_key, {'format': '{model}\n'})['format']
        return self.templates[template_key]['format']

    def format_message(self, template_key: str, **kwargs) -> str:
        template = self.get_template(template_key)
        try:
            return template.format(**kwargs)
        except KeyError as e:
            logger.error(f"Missing template variable: {e}")
            return f"Template error: missing variable {e}\n"

    def _num(self, value) -> str:
        return 'n/a' if value is None else str(format_sig(value, self.digits))

    def summary(self, reports: Sequence[FitReport], comparison: Dict, outcome_summary: str, T: int) -> str:
        parts = [self.format_message('run_header', generated=format_datetime('datetime'),
                                     outcome_summary=outcome_summary, T=T)]
        for report in reports:
            marginal = report.marginal
            parts.append(self.format_message(
                'model_summary', model=report.model, method=report.method, k=report.K,
                max_loglik=self._num(report.max_loglik if report.max_loglik is not None else report.loglik),
                log_ml=self._num(marginal.log_ml if marginal else None),
                log_ml_lower=self._num(marginal.ci95[0] if marginal else None),
                log_ml_upper=self._num(marginal.ci95[1] if marginal else None),
                gof_p=self._num(report.gof_pvalue)))
            if report.stationary:
                parts.append(self.format_message(
                    'switching_summary', model=report.model,
                    p01=self._num(report.stationary['p01']), p10=self._num(report.stationary['p10']),
                    pbar0=self._num(report.stationary['pbar0']), pbar1=self._num(report.stationary['pbar1']),
                    outcome=report.outcome))
            elif report.outcome and report.outcome != 'switching':
                parts.append(self.format_message('collapse_notice', model=report.model, outcome=report.outcome))
        if comparison.get('log_bf') is not None:
            parts.append(self.format_message(
                'comparison', favored=comparison['favored'], other=comparison['other'],
                log_bf=self._num(comparison['log_bf']),
                posterior_prob=self._num(comparison['posterior_prob'])))
        return ''.join(parts)

    @staticmethod
    def _get_default_templates() -> Dict:
        """Fallback when templates.yaml cannot be read"""
        return {
            'run_header': {'format': 'MSML estimation run\nGenerated: {generated}\n'
                                     'Observations: {outcome_summary}\nPeriods: {T}\n'},
            'model_summary': {'format': '[{model}] K={k} log ML={log_ml} GOF p={gof_p}\n'},
            'switching_summary': {'format': '[{model}] p01={p01} p10={p10} stationary=({pbar0}, {pbar1})\n'},
            'comparison': {'format': 'log Bayes factor ({favored} over {other}): {log_bf}\n'},
            'collapse_notice': {'format': '[{model}] two states not found: {outcome}\n'},
        }
