import copy
import logging
import os
from typing import Any, Dict, Optional

import yaml

from config.settings import settings
from models.errors import ConfigError
from models.mle_fit import MleConfig
from models.priors import McmcConfig, PriorSpec
from models.run_config import DatasetSchema, RunConfig, WeatherSource

logger = logging.getLogger(__name__)

SECTIONS = ('dataset', 'model', 'mle', 'priors', 'mcmc', 'restriction', 'marginal', 'gof',
            'correlation', 'report')

# command-line flag -> (section, key)
FLAG_KEYS = {
    'seed': ('mcmc', 'seed'),
    'chains': ('mcmc', 'n_chains'),
    'burnin': ('mcmc', 'n_burnin'),
    'keep': ('mcmc', 'n_keep'),
    'thin': ('mcmc', 'thinning'),
}


def deep_merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and merged[key]:
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _read_yaml(path: str) -> Dict:
    try:
        with open(path, 'r', encoding='utf-8') as file:
            data = yaml.safe_load(file)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping of sections")
    return data


class ConfigManager:
    """Loads the default run configuration, merges a user file over it and
    applies command-line and MSML_SEED overrides.

    Precedence: command-line flag > MSML_SEED (seed only) > user file > defaults.
    """

    def __init__(self, path: Optional[str] = None, defaults_path: Optional[str] = None):
        self.path = path
        self.raw = _read_yaml(defaults_path or settings.DEFAULT_CONFIG_FILE)
        if path:
            user = _read_yaml(path)
            unknown = sorted(set(user) - set(SECTIONS))
            if unknown:
                raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
            self.raw = deep_merge(self.raw, user)
            logger.info(f"Loaded run configuration from {path}")

        env_seed = settings.seed_override()
        if env_seed is not None:
            self.raw['mcmc']['seed'] = env_seed
            logger.info(f"Seed {env_seed} taken from MSML_SEED")

    def apply_flags(self, **flags: Any) -> 'ConfigManager':
        for flag, value in flags.items():
            if value is None:
                continue
            if flag not in FLAG_KEYS:
                raise ConfigError(f"unknown override flag: {flag}")
            section, key = FLAG_KEYS[flag]
            self.raw[section][key] = value
        return self

    def section(self, name: str) -> Dict:
        return dict(self.raw.get(name) or {})

    def build(self) -> RunConfig:
        """Typed run configuration; invalid values raise ConfigError"""
        try:
            return self._build()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(f"invalid run configuration: {e}")

    def _build(self) -> RunConfig:
        dataset = self.section('dataset')
        model = self.section('model')
        mcmc = self.section('mcmc')
        restriction = self.section('restriction')
        correlation = self.section('correlation')
        report = self.section('report')

        schema = DatasetSchema(
            outcome_labels=tuple(str(label) for label in dataset['outcome_labels']),
            covariates={str(k): str(v) for k, v in (dataset.get('covariates') or {}).items()},
            n_periods=dataset.get('n_periods'),
            path=self._resolve(dataset.get('path')),
        )
        candidates = model.get('candidate_covariates')
        unknown = sorted(set(candidates or ()) - set(schema.covariates))
        if unknown:
            raise ConfigError(f"candidate covariates not declared in dataset.covariates: {unknown}")

        if 'acceptance_band' in mcmc:
            mcmc['acceptance_band'] = tuple(float(v) for v in mcmc['acceptance_band'])

        return RunConfig(
            dataset=schema,
            candidate_covariates=tuple(candidates) if candidates is not None else None,
            switching=bool(model.get('switching', True)),
            mle=MleConfig(**self.section('mle')),
            priors=PriorSpec(**self.section('priors')),
            mcmc=McmcConfig(**mcmc),
            restriction_levels=tuple(float(a) for a in restriction['levels']),
            max_refits_per_pass=int(restriction['max_refits_per_pass']),
            n_bootstrap=int(self.section('marginal')['n_bootstrap']),
            gof_n_rep=int(self.section('gof')['n_rep']),
            gof_min_expected=float(self.section('gof')['min_expected']),
            first_week_start=correlation.get('first_week_start'),
            external_series={str(k): self._resolve(v) for k, v in (correlation.get('external_series') or {}).items()},
            preprocess={str(k): WeatherSource(**{**v, 'path': self._resolve(v['path'])})
                        for k, v in (correlation.get('preprocess') or {}).items()},
            significant_digits=int(report['significant_digits']),
            level=float(report['level']),
        )

    def _resolve(self, path: Optional[str]) -> Optional[str]:
        """Relative paths in a user file are taken relative to that file"""
        if path is None or os.path.isabs(path) or not self.path:
            return path
        return os.path.join(os.path.dirname(os.path.abspath(self.path)), path)
