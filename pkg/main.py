#!/usr/bin/env python3
"""
MSML Accident Severity Estimation
Command-line entry point for multinomial logit and Markov switching
multinomial logit estimation of accident severity data
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import settings
from models.errors import MsmlError
from models.model_spec import ModelSpec
from models.posterior import StateSeries
from models.run_config import RunConfig, WeatherSource
from services import io_service
from services.config_manager import ConfigManager
from services.correlation_service import SUMMER_MONTHS, WINTER_MONTHS, corr_matrix, season_mask
from services.diagnostics_service import gof_pvalue
from services.model_selection_service import bayes_factor, harmonic_mean_log_ml, posterior_model_probs
from services.pipeline_service import PipelineService, file_stem
from services.posterior_service import state_series
from services.synthetic_service import design_mask, load_design
from utils.helpers import format_sig, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CODES = {'ingest': 3, 'fit': 4, 'diagnostic': 5, 'config': 6}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='run configuration YAML (merged over config/defaults.yaml)')
    common.add_argument('--seed', type=int, help='RNG seed (overrides MSML_SEED and the config file)')
    common.add_argument('--chains', type=int, help='number of MCMC chains')
    common.add_argument('--burnin', type=int, help='burn-in sweeps per chain')
    common.add_argument('--keep', type=int, help='kept draws per chain')
    common.add_argument('--thin', type=int, help='thinning interval')
    common.add_argument('--out', default='output', help='output directory (or file for generate)')

    parser = argparse.ArgumentParser(prog='msml', description=__doc__.strip().splitlines()[0])
    verbs = parser.add_subparsers(dest='command', required=True)

    generate = verbs.add_parser('generate', parents=[common], help='simulate a dataset from a design file')
    generate.add_argument('--design', required=True, help='YAML generating model')

    for name, text in (('fit-ml', 'fit the multinomial logit'), ('fit-msml', 'fit the Markov switching model'),
                       ('pipeline', 'run ML-by-MLE, ML-by-MCMC and MSML and compare them')):
        verb = verbs.add_parser(name, parents=[common], help=text)
        verb.add_argument('--data', help='dataset CSV (defaults to dataset.path)')
    verbs.choices['fit-ml'].add_argument('--method', choices=('mle', 'mcmc', 'both'), default='both')
    verbs.choices['fit-ml'].add_argument('--no-select', action='store_true',
                                         help='keep all candidate covariates')

    compare = verbs.add_parser('compare', parents=[common], help='log Bayes factor from two draws files')
    compare.add_argument('draws', nargs=2, metavar='DRAWS', help='draws CSV of model A, then model B')

    gof = verbs.add_parser('gof', parents=[common], help='Monte Carlo chi-square GOF of a parameter table')
    gof.add_argument('--data', help='dataset CSV (defaults to dataset.path)')
    gof.add_argument('--params', required=True, help='parameter table CSV')
    gof.add_argument('--n-rep', type=int, help='replicate datasets')

    correlate = verbs.add_parser('correlate', parents=[common], help='weighted correlations of state series')
    correlate.add_argument('series', nargs='+', metavar='STATE_SERIES', help='state-series CSV files')
    correlate.add_argument('--external', action='append', default=[], metavar='NAME=CSV',
                           help='external (week, value) series; repeatable')
    correlate.add_argument('--daily', action='append', default=[], metavar='NAME=CSV',
                           help='dated (date, value) observations averaged per week; repeatable')
    correlate.add_argument('--first-week-start', help='date of the first Sunday, for seasonal panels')
    return parser


class MsmlApplication:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: Optional[RunConfig] = None

    def initialize(self):
        """Validate settings and build the run configuration"""
        settings.validate()
        manager = ConfigManager(self.args.config)
        manager.apply_flags(seed=self.args.seed, chains=self.args.chains, burnin=self.args.burnin,
                            keep=self.args.keep, thin=self.args.thin)
        self.config = manager.build()
        logger.info(f"Seed {self.config.mcmc.seed}, {self.config.mcmc.n_chains} chains, "
                    f"burn-in {self.config.mcmc.n_burnin}, keep {self.config.mcmc.n_keep}")

    def run(self) -> int:
        try:
            self.initialize()
            handler = getattr(self, f"cmd_{self.args.command.replace('-', '_')}")
            handler()
            return EXIT_OK
        except MsmlError as e:
            logger.error(f"{self.args.command} failed in stage '{e.stage}': {e}")
            print(f"error ({e.stage}): {e}", file=sys.stderr)
            return EXIT_CODES.get(e.stage, EXIT_CODES['fit'])
        except np.linalg.LinAlgError as e:
            logger.error(f"{self.args.command} failed with a linear algebra error: {e}")
            print(f"error (fit): {e}", file=sys.stderr)
            return EXIT_CODES['fit']
        except OSError as e:
            logger.error(f"{self.args.command} failed reading or writing files: {e}")
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CODES['config'] if self.config is None else EXIT_CODES['fit']
        except ValueError as e:
            logger.error(f"{self.args.command} failed: {e}")
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CODES['config'] if self.config is None else EXIT_CODES['fit']

    def _dataset(self):
        path = getattr(self.args, 'data', None) or self.config.dataset.path
        if not path:
            raise MsmlError("no dataset: pass --data or set dataset.path", stage='config')
        return io_service.ingest(path, self.config.dataset)

    def _out(self, name: str) -> str:
        os.makedirs(self.args.out, exist_ok=True)
        return os.path.join(self.args.out, name)

    def cmd_generate(self):
        design = load_design(self.args.design)
        rng = np.random.default_rng(self.config.mcmc.seed)
        data = design.generate(rng)
        path = self.args.out if self.args.out.endswith('.csv') else self._out('dataset.csv')
        io_service.write_dataset_csv(data.dataset, path)
        states = StateSeries(prob=data.S.astype(float), std=np.zeros(design.T), label='true_states')
        io_service.write_state_series(states, os.path.splitext(path)[0] + '_states.csv')
        schema = io_service.write_schema_yaml(data.dataset, path, os.path.splitext(path)[0] + '_config.yaml')
        print(f"{path}: {data.dataset.outcome_summary()} records over {design.T} periods")
        print(f"{schema}: run configuration for this dataset (pass with --config)")

    def cmd_fit_ml(self):
        dataset = self._dataset()
        pipeline = PipelineService(self.config, self.args.out)
        fit, mle_report = pipeline.fit_ml_mle(dataset, select=not self.args.no_select)
        reports = [mle_report] if self.args.method != 'mcmc' else []
        files = []
        if self.args.method != 'mle':
            sample, mcmc_report = pipeline.fit_ml_mcmc(dataset, fit.spec, start=fit)
            reports.append(mcmc_report)
            files.append(io_service.write_draws(sample, self._out('ml_mcmc_draws.csv')))
        self._write_reports(reports, {}, files)

    def cmd_fit_msml(self):
        dataset = self._dataset()
        pipeline = PipelineService(self.config, self.args.out)
        spec = pipeline.candidate_spec(dataset)
        result, report = pipeline.fit_msml(dataset, spec, pipeline.sampler.start_fit(dataset, spec))
        series = state_series(result.sample, label='MSML')
        files = [io_service.write_draws(result.sample, self._out('msml_draws.csv')),
                 io_service.write_state_series(series, self._out('msml_state_series.csv'),
                                               self.config.significant_digits)]
        self._write_reports([report], {}, files)

    def cmd_pipeline(self):
        dataset = self._dataset()
        result = PipelineService(self.config, self.args.out).run(dataset)
        for name, path in sorted(result.files.items()):
            print(f"{name}: {path}")
        comparison = result.comparison
        if comparison.get('log_bf') is not None:
            print(f"log BF ({comparison['favored']} over {comparison['other']}): "
                  f"{format_sig(comparison['log_bf'], self.config.significant_digits)}")
        elif comparison.get('msml_outcome') is None:
            print("MSML stage skipped (model.switching is false)")
        else:
            print(f"MSML outcome: {comparison['msml_outcome']}")

    def cmd_compare(self):
        rng = np.random.default_rng(self.config.mcmc.seed)
        marginals = [harmonic_mean_log_ml(io_service.read_draws(path)['loglik'].to_numpy(),
                                          self.config.n_bootstrap, rng)
                     for path in self.args.draws]
        log_bf = bayes_factor(marginals[0], marginals[1])
        prob_a, prob_b = posterior_model_probs(log_bf)
        digits = self.config.significant_digits
        for path, marginal in zip(self.args.draws, marginals):
            print(f"{path}: log ML {format_sig(marginal.log_ml, digits)} "
                  f"[{format_sig(marginal.ci95[0], digits)}, {format_sig(marginal.ci95[1], digits)}]")
        print(f"log BF (B over A): {format_sig(log_bf, digits)}  "
              f"P(A|Y)={format_sig(prob_a, digits)} P(B|Y)={format_sig(prob_b, digits)}")

    def cmd_gof(self):
        dataset = self._dataset()
        model = io_service.read_parameter_table(self.args.params, dataset)
        n_rep = self.args.n_rep or self.config.gof_n_rep
        spec = ModelSpec(I=dataset.I, switching=model.switching,
                         mask=design_mask(model.beta0, model.beta1, model.switching))
        p_value = gof_pvalue(model, dataset, spec, n_rep=n_rep, rng=np.random.default_rng(self.config.mcmc.seed),
                             min_expected=self.config.gof_min_expected)
        print(f"GOF p-value ({n_rep} replicates): {format_sig(p_value, self.config.significant_digits)}")

    def cmd_correlate(self):
        series = {}
        for path in self.args.series:
            item = io_service.read_state_series(path)
            series[item.label] = item
        T = next(iter(series.values())).T
        start = self.args.first_week_start or self.config.first_week_start
        daily = {name: WeatherSource(path=path) for name, path in self._pairs(self.args.daily, '--daily')}
        pipeline = PipelineService(self.config, self.args.out)
        external = {name: io_service.read_series_csv(path, T)
                    for name, path in self._pairs(self.args.external, '--external')}
        for name, values in pipeline.external_series(T, start, daily).items():
            external.setdefault(name, values)

        panels: Dict[str, Optional[np.ndarray]] = {'all': None}
        if start:
            panels['winter'] = season_mask(start, T, WINTER_MONTHS)
            panels['summer'] = season_mask(start, T, SUMMER_MONTHS)
        tables: List[pd.DataFrame] = []
        for panel, mask in panels.items():
            if mask is not None and not mask.any():
                logger.warning(f"Panel {panel} has no weeks; skipped")
                continue
            keep = np.ones(T, bool) if mask is None else mask
            observed = {name: values for name, values in external.items() if not np.any(np.isnan(values[keep]))}
            if len(observed) < len(external):
                logger.warning(f"Skipping series with missing weeks in panel {panel}: "
                               f"{sorted(set(external) - set(observed))}")
            table = corr_matrix(series, observed, mask=mask)
            table.insert(0, 'panel', panel)
            tables.append(table)
        combined = pd.concat(tables)
        path = self._out('correlations.csv')
        combined.to_csv(path, index_label='series', float_format=f"%.{self.config.significant_digits}g")
        print(combined.to_string())

    @staticmethod
    def _pairs(entries: List[str], flag: str) -> List[Tuple[str, str]]:
        pairs = []
        for entry in entries:
            name, _, path = entry.partition('=')
            if not name or not path:
                raise MsmlError(f"{flag} expects NAME=CSV, got {entry!r}", stage='config')
            pairs.append((name, path))
        return pairs

    def _write_reports(self, reports, comparison, files: List[str]):
        digits = self.config.significant_digits
        for report in reports:
            stem = file_stem(report.model)
            files.append(io_service.write_parameter_table(report.parameters,
                                                          self._out(f"{stem}_parameters.csv"), digits))
        files.append(io_service.write_report_json(reports, comparison, self._out('report.json'), digits))
        for path in files:
            print(path)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point"""
    args = build_parser().parse_args(argv)

    # Setup logging first
    setup_logging()

    logger.info("=" * 50)
    logger.info(f"MSML estimation: {args.command} starting")
    logger.info("=" * 50)

    exit_code = MsmlApplication(args).run()

    logger.info("=" * 50)
    logger.info(f"MSML estimation: {args.command} finished with exit code {exit_code}")
    logger.info("=" * 50)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
