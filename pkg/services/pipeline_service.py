import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.dataset import Dataset
from models.errors import MsmlError
from models.mle_fit import MleFit
from models.model_spec import ModelSpec
from models.posterior import PosteriorSample, StateSeries
from models.reports import FitReport, ParameterRow
from models.run_config import RunConfig, WeatherSource
from services import io_service
from services.correlation_service import SUMMER_MONTHS, WINTER_MONTHS, corr_matrix, season_mask, weekly_weather
from services.diagnostics_service import gof_pvalue, sample_psrf
from services.mcmc_service import McmcSampler
from services.mle_service import MleEstimator
from services.model_selection_service import bayes_factor, harmonic_mean_log_ml, posterior_model_probs
from services.posterior_service import (RestrictionOutcome, RestrictionResult, averaged_outcome_probs,
                                        restrict_workflow, state_series, stationary_summary, summarize)
from services.report_service import ReportFormatter
from utils.helpers import spawn_generators

logger = logging.getLogger(__name__)

ML_MLE = 'ML-by-MLE'
ML_MCMC = 'ML-by-MCMC'
MSML = 'MSML'

# independent random streams per stage, spawned from the run seed
STAGES = ('ml_mle_gof', 'ml_mcmc_gof', 'ml_mcmc_marginal', 'msml_gof', 'msml_marginal')


@dataclass
class PipelineResult:
    reports: List[FitReport]
    comparison: Dict[str, Any]
    files: Dict[str, str] = field(default_factory=dict)
    ml_fit: Optional[MleFit] = None
    ml_sample: Optional[PosteriorSample] = None
    restriction: Optional[RestrictionResult] = None
    series: Optional[StateSeries] = None


def file_stem(model: str) -> str:
    return model.lower().replace('-by-', '_')


class PipelineService:
    """Runs ML-by-MLE (with covariate selection), ML-by-MCMC on the
    selected covariates and MSML through the restriction workflow, then
    compares and diagnoses them and writes the reports."""

    def __init__(self, config: RunConfig, out_dir: str, formatter: Optional[ReportFormatter] = None):
        self.config = config
        self.out_dir = out_dir
        self.estimator = MleEstimator(config.mle)
        self.sampler = McmcSampler(config.priors, config.mcmc, self.estimator)
        self.formatter = formatter or ReportFormatter(digits=config.significant_digits)
        self.generators = dict(zip(STAGES, spawn_generators(config.mcmc.seed, len(STAGES))))

    def candidate_spec(self, dataset: Dataset, switching: bool = False) -> ModelSpec:
        """All configured candidate covariates in every non-base outcome"""
        names = self.config.candidate_covariates
        selected = None if names is None else [list(names)] * (dataset.I - 1)
        return ModelSpec.from_covariates(dataset.I, dataset.covariate_names, selected, switching)

    # ML-by-MLE

    def fit_ml_mle(self, dataset: Dataset, select: bool = True) -> Tuple[MleFit, FitReport]:
        candidate = self.candidate_spec(dataset)
        spec = self.estimator.select_covariates(dataset, candidate) if select else candidate
        fit = self.estimator.fit_ml(dataset, spec)
        logger.info(f"{ML_MLE}: K={fit.K}, LL={fit.loglik:.4f}, AIC={fit.aic:.4f}, {fit.n_iter} iterations")

        rows = []
        for i, d in spec.entries():
            lower, upper = fit.confidence_interval(i, d)
            rows.append(ParameterRow(parameter='beta', outcome=dataset.outcome_labels[i],
                                     covariate=dataset.covariate_names[d], state='',
                                     estimate=float(fit.beta_hat[i, d]), lower=lower, upper=upper,
                                     se=float(fit.se[i, d])))
        report = FitReport(model=ML_MLE, method='MLE', K=fit.K, parameters=rows, loglik=fit.loglik,
                           aic=fit.aic, max_loglik=fit.loglik,
                           spec=spec.describe(dataset.covariate_names, dataset.outcome_labels))
        report.gof_pvalue = self._gof(fit, dataset, spec, 'ml_mle_gof')
        return fit, report

    # ML-by-MCMC and MSML

    def fit_ml_mcmc(self, dataset: Dataset, spec: ModelSpec,
                    start: Optional[MleFit] = None) -> Tuple[PosteriorSample, FitReport]:
        spec = spec.as_single_state()
        sample = self.sampler.run_chains(dataset, spec, start=start)
        report = self._mcmc_report(ML_MCMC, sample, dataset, spec, 'ml_mcmc')
        return sample, report

    def fit_msml(self, dataset: Dataset, spec: ModelSpec,
                 start: Optional[MleFit] = None) -> Tuple[RestrictionResult, FitReport]:
        result = restrict_workflow(dataset, spec.as_switching(), self.sampler,
                                   levels=self.config.restriction_levels,
                                   max_refits_per_pass=self.config.max_refits_per_pass, start=start)
        report = self._mcmc_report(MSML, result.sample, dataset, result.sample.spec, 'msml')
        report.outcome = result.outcome.value
        report.K = result.spec.free_parameter_count()
        report.spec = result.spec.describe(dataset.covariate_names, dataset.outcome_labels)
        return result, report

    def _mcmc_report(self, model: str, sample: PosteriorSample, dataset: Dataset, spec: ModelSpec,
                     stage: str) -> FitReport:
        level = self.config.level
        intervals = summarize(sample, level)
        rows = []
        for key, interval in intervals.items():
            is_beta = key.kind == 'beta'
            rows.append(ParameterRow(parameter=key.kind if not is_beta else 'beta',
                                     outcome=dataset.outcome_labels[key.i] if is_beta else '',
                                     covariate=dataset.covariate_names[key.d] if is_beta else '',
                                     state='' if key.state is None else str(key.state),
                                     estimate=interval.mean, lower=interval.lower, upper=interval.upper))

        marginal = harmonic_mean_log_ml(sample, self.config.n_bootstrap, self.generators[f"{stage}_marginal"])
        psrf_values, mpsrf_value = self._convergence(sample)
        report = FitReport(model=model, method='MCMC', K=spec.free_parameter_count(), parameters=rows,
                           max_loglik=sample.max_loglik(), marginal=marginal, psrf=psrf_values,
                           mpsrf=mpsrf_value, acceptance=sample.acceptance_rates(),
                           spec=spec.describe(dataset.covariate_names, dataset.outcome_labels))

        if spec.switching:
            stationary = stationary_summary(sample, level)
            p01, p10 = sample.posterior_mean_transitions()
            report.stationary = {
                'p01': p01, 'p10': p10,
                'pbar0': stationary['pbar0'].mean, 'pbar1': stationary['pbar1'].mean,
                'pbar0_interval': [stationary['pbar0'].lower, stationary['pbar0'].upper],
                'pbar1_interval': [stationary['pbar1'].lower, stationary['pbar1'].upper],
            }
            probs = averaged_outcome_probs(sample, dataset, spec)
            report.averaged_outcome_probs = {'state0': probs[0].tolist(), 'state1': probs[1].tolist()}
        report.gof_pvalue = self._gof(sample, dataset, spec, f"{stage}_gof")
        return report

    def _convergence(self, sample: PosteriorSample) -> Tuple[Dict[str, float], Optional[float]]:
        if sample.n_chains < 2:
            return {}, None
        try:
            return sample_psrf(sample)
        except MsmlError as e:
            logger.warning(f"Convergence diagnostics unavailable: {e}")
            return {}, None

    def _gof(self, fit, dataset: Dataset, spec: ModelSpec, stage: str) -> Optional[float]:
        try:
            return gof_pvalue(fit, dataset, spec, n_rep=self.config.gof_n_rep, rng=self.generators[stage],
                              min_expected=self.config.gof_min_expected)
        except MsmlError as e:
            logger.warning(f"GOF p-value unavailable for {stage}: {e}")
            return None

    # comparison

    @staticmethod
    def compare(ml: FitReport, msml: FitReport) -> Dict[str, Any]:
        """log Bayes factor of MSML over ML-by-MCMC and posterior model
        probabilities; a collapsed MSML is reported without a factor"""
        comparison: Dict[str, Any] = {
            'log_ml': {ml.model: ml.marginal.log_ml if ml.marginal else None,
                       msml.model: msml.marginal.log_ml if msml.marginal else None},
            'msml_outcome': msml.outcome,
            'log_bf': None, 'favored': ml.model, 'other': msml.model, 'posterior_prob': None,
        }
        if msml.outcome == RestrictionOutcome.COLLAPSED.value or not (ml.marginal and msml.marginal):
            logger.info(f"{msml.model} collapsed to a single state; no Bayes factor reported")
            return comparison
        log_bf = bayes_factor(ml.marginal, msml.marginal)
        prob_ml, prob_msml = posterior_model_probs(log_bf)
        favored, other = (msml.model, ml.model) if log_bf > 0 else (ml.model, msml.model)
        comparison.update({
            'log_bf': abs(log_bf), 'log_bf_msml_over_ml': log_bf,
            'favored': favored, 'other': other,
            'posterior_prob': max(prob_ml, prob_msml),
            'posterior_model_probs': {ml.model: prob_ml, msml.model: prob_msml},
        })
        logger.info(f"log BF ({favored} over {other}) = {abs(log_bf):.4f}")
        return comparison

    def external_series(self, T: int, first_week_start: Optional[str] = None,
                        sources: Optional[Dict[str, WeatherSource]] = None) -> Dict[str, np.ndarray]:
        """Weekly external series: (week, value) files as given, dated
        weather files reduced by their transform"""
        external = {name: io_service.read_series_csv(path, T)
                    for name, path in self.config.external_series.items()}
        sources = {**self.config.preprocess, **(sources or {})}
        start = first_week_start or self.config.first_week_start
        if sources and not start:
            raise MsmlError("weather preprocessing needs first_week_start", stage='config')
        for name, source in sources.items():
            external[name] = weekly_weather(io_service.read_weather_csv(source.path), source, start, T)
            logger.info(f"Weekly series {name}: {source.transform} of {source.path}")
        return external

    def correlations(self, series: StateSeries) -> Dict[str, Dict]:
        """Correlation tables of the MSML state series with the configured
        external series, all year plus winter and summer panels"""
        external = self.external_series(series.T)
        panels = {'all': None}
        if self.config.first_week_start:
            panels['winter'] = season_mask(self.config.first_week_start, series.T, WINTER_MONTHS)
            panels['summer'] = season_mask(self.config.first_week_start, series.T, SUMMER_MONTHS)
        tables = {}
        for panel, mask in panels.items():
            if mask is not None and not mask.any():
                logger.warning(f"Panel {panel} has no weeks; skipped")
                continue
            keep = np.ones(series.T, bool) if mask is None else mask
            observed = {name: values for name, values in external.items()
                        if not np.any(np.isnan(values[keep]))}
            skipped = sorted(set(external) - set(observed))
            if skipped:
                logger.warning(f"Skipping series with missing weeks in panel {panel}: {skipped}")
            table = corr_matrix({series.label or MSML: series}, observed, mask=mask)
            tables[panel] = table.iloc[:, 0].to_dict()
        return tables

    # whole run

    def run(self, dataset: Dataset) -> PipelineResult:
        os.makedirs(self.out_dir, exist_ok=True)
        logger.info(f"Pipeline on T={dataset.T}, N={dataset.outcome_summary()}, output {self.out_dir}")

        ml_fit, mle_report = self.fit_ml_mle(dataset)
        ml_sample, mcmc_report = self.fit_ml_mcmc(dataset, ml_fit.spec, start=ml_fit)
        result = PipelineResult(reports=[mle_report, mcmc_report], comparison={}, ml_fit=ml_fit,
                                ml_sample=ml_sample)

        if self.config.switching:
            restriction, msml_report = self.fit_msml(dataset, ml_fit.spec, start=ml_fit)
            result.reports.append(msml_report)
            result.restriction = restriction
            result.comparison = self.compare(mcmc_report, msml_report)
            result.series = state_series(restriction.sample, label=MSML)
        else:
            logger.info(f"model.switching is false: {MSML} stage and Bayes factor skipped")
            result.comparison = {'log_ml': {mcmc_report.model: mcmc_report.marginal.log_ml},
                                 'msml_outcome': None, 'log_bf': None}
        self.write_outputs(result, dataset)
        return result

    def write_outputs(self, result: PipelineResult, dataset: Dataset):
        digits = self.config.significant_digits
        files = result.files
        for report in result.reports:
            stem = file_stem(report.model)
            files[f"{stem}_parameters"] = io_service.write_parameter_table(
                report.parameters, os.path.join(self.out_dir, f"{stem}_parameters.csv"), digits)
        if result.ml_sample is not None:
            files['ml_mcmc_draws'] = io_service.write_draws(
                result.ml_sample, os.path.join(self.out_dir, 'ml_mcmc_draws.csv'))
        if result.restriction is not None:
            files['msml_draws'] = io_service.write_draws(
                result.restriction.sample, os.path.join(self.out_dir, 'msml_draws.csv'))
        extra = {}
        if result.series is not None:
            files['state_series'] = io_service.write_state_series(
                result.series, os.path.join(self.out_dir, 'msml_state_series.csv'), digits)
            if self.config.external_series or self.config.preprocess:
                extra['correlations'] = self.correlations(result.series)
        files['report'] = io_service.write_report_json(
            result.reports, result.comparison, os.path.join(self.out_dir, 'report.json'), digits, extra)

        summary = self.formatter.summary(result.reports, result.comparison, dataset.outcome_summary(), dataset.T)
        path = os.path.join(self.out_dir, 'summary.txt')
        with open(path, 'w', encoding='utf-8') as file:
            file.write(summary)
        files['summary'] = path
        logger.info(f"Wrote {len(files)} output files to {self.out_dir}")
