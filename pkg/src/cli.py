"""
Command-line entry point: python -m src.cli <command> [options]

    ingest     load, validate and filter a review file
    train      nested-CV model selection + final classifier
    calibrate  sensitivity / specificity and the Beta pseudo-counts
    estimate   naive and Bayesian prevalence on a test corpus
    simulate   synthetic corpora with gold labels
    study      prevalence over time per community and reviewer threshold
    report     collect an output directory into report.json

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
import argparse
import glob
import json
import logging
import os
import re
import sys
from dataclasses import asdict

import numpy as np
import pandas as pd

from src.calibration import DEV_TRUTHFUL_ASSUMPTION, calibrate, load_calibration, save_calibration
from src.config import ConfigError, archive_config, load_config, validate
from src.corpus import filter_reviews, group_by_community, load_jsonl, sample_uniform, write_jsonl
from src.plots import plot_series
from src.prevalence_bayes import estimate_prevalence, write_posterior_csv
from src.prevalence_naive import UninformativeClassifierError, naive_estimate, positive_rate
from src.study import CommunityProfile, compare_hypotheses, load_profiles, run_series, write_series_csv
from src.synthetic_oracle import (GenerativeParams, expected_positive_rate, generate_labels_outputs,
                                  generate_review_population, generate_signal_cost_community,
                                  generate_text_corpus)
from src.textmodel import load_model, nested_cross_validate, predict_corpus, save_model, select_C, train

logger = logging.getLogger("CLI")

EXIT_OK, EXIT_VALIDATION_ERROR, EXIT_IO_ERROR = 0, 1, 2

# flag dest -> RunConfig attribute path
FLAG_FIELDS = {
    'seed': ('seed',),
    'out': ('paths', 'output_dir'),
    'n_jobs': ('n_jobs',),
    'input': ('paths', 'input'),
    'train': ('paths', 'train'),
    'dev': ('paths', 'dev'),
    'test': ('paths', 'test'),
    'model': ('paths', 'model'),
    'calibration': ('paths', 'calibration'),
    'profiles': ('paths', 'profiles'),
    'min_chars': ('min_chars',),
    'rating': ('rating',),
    'sample': ('sample_size',),
    'C': ('C',),
    'c_grid': ('c_grid',),
    'folds': ('folds',),
    'iterations': ('gibbs', 'iterations'),
    'burn_in': ('gibbs', 'burn_in'),
    'lag': ('gibbs', 'lag'),
    'chains': ('gibbs', 'chains'),
    'granularity': ('granularity',),
    'cumulative': ('cumulative',),
    'thresholds': ('thresholds',),
    'min_bucket_size': ('min_bucket_size',),
    'pi_star': ('simulation', 'pi_star'),
    'eta_star': ('simulation', 'eta_star'),
    'theta_star': ('simulation', 'theta_star'),
    'n': ('simulation', 'n_test'),
    'vocab_overlap': ('simulation', 'vocab_overlap'),
}


# -- Setup --

def setup_logging(output_dir):
    """Logs to stderr and to <output_dir>/run.log; LOG_LEVEL sets the level."""
    os.makedirs(output_dir, exist_ok=True)
    logging.basicConfig(
        level=os.environ.get('LOG_LEVEL', 'INFO').upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.FileHandler(os.path.join(output_dir, 'run.log')), logging.StreamHandler()],
        force=True,
    )


def _parse_community(value):
    name, sep, path = value.partition('=')
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {value!r}")
    return name, path


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file (flags override it)')
    common.add_argument('--seed', type=int)
    common.add_argument('--out', help='output directory')
    common.add_argument('--n-jobs', type=int, dest='n_jobs')

    gibbs = argparse.ArgumentParser(add_help=False)
    gibbs.add_argument('--iterations', type=int)
    gibbs.add_argument('--burn-in', type=int, dest='burn_in')
    gibbs.add_argument('--lag', type=int)
    gibbs.add_argument('--chains', type=int)

    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument('--model', help='model JSON (default: <out>/model.json)')
    scoring.add_argument('--calibration', help='calibration JSON (default: <out>/calibration.json)')

    parser = argparse.ArgumentParser(prog='python -m src.cli', description='Deception prevalence toolkit')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('ingest', parents=[common], help='load, validate and filter reviews')
    p.add_argument('--input')
    p.add_argument('--min-chars', type=int, dest='min_chars')
    p.add_argument('--rating', type=int)
    p.add_argument('--sample', type=int, help='uniform sample size')

    p = sub.add_parser('train', parents=[common], help='train the deception classifier')
    p.add_argument('--train')
    p.add_argument('--C', type=float, dest='C', help='fixed cost (skips grid selection)')
    p.add_argument('--c-grid', type=float, nargs='+', dest='c_grid')
    p.add_argument('--folds', type=int)

    p = sub.add_parser('calibrate', parents=[common], help='estimate sensitivity and specificity')
    p.add_argument('--train')
    p.add_argument('--dev')
    p.add_argument('--model')
    p.add_argument('--C', type=float, dest='C')

    p = sub.add_parser('estimate', parents=[common, gibbs, scoring], help='estimate prevalence on a test corpus')
    p.add_argument('--test')

    p = sub.add_parser('simulate', parents=[common], help='write synthetic corpora')
    p.add_argument('--pi-star', type=float, dest='pi_star')
    p.add_argument('--eta-star', type=float, dest='eta_star')
    p.add_argument('--theta-star', type=float, dest='theta_star')
    p.add_argument('--n', type=int, help='test corpus size')
    p.add_argument('--vocab-overlap', type=float, dest='vocab_overlap')

    p = sub.add_parser('study', parents=[common, gibbs, scoring], help='prevalence over time per community')
    p.add_argument('--test', help='corpus grouped by community when no --community is given')
    p.add_argument('--community', type=_parse_community, action='append', metavar='NAME=PATH')
    p.add_argument('--profiles')
    p.add_argument('--thresholds', type=int, nargs='+')
    p.add_argument('--granularity', choices=['monthly', 'quarterly', 'yearly'])
    p.add_argument('--cumulative', action=argparse.BooleanOptionalAction, default=None)
    p.add_argument('--min-bucket-size', type=int, dest='min_bucket_size')

    sub.add_parser('report', parents=[common], help='summarise an output directory')
    return parser


def apply_overrides(config, args):
    """Copies every flag that was given onto the config; unset flags keep the file or default value."""
    for dest, path in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        target = config
        for name in path[:-1]:
            target = getattr(target, name)
        setattr(target, path[-1], value)
    if getattr(args, 'community', None):
        config.paths.communities = dict(args.community)
    return config


# -- Helpers --

def _require(path, name):
    if not path:
        raise ConfigError(f"no {name} path given (set paths.{name} or --{name})")
    return path


def _model_path(config):
    return config.paths.model or config.output_path('model.json')


def _calibration_path(config):
    return config.paths.calibration or config.output_path('calibration.json')


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def write_json(doc, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(doc, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write('\n')


def _read_json(path):
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def _slug(name):
    return re.sub(r'[^A-Za-z0-9._-]+', '_', name).strip('_') or 'community'


# -- Commands --

def cmd_ingest(config):
    """Loads a review file, applies the length and rating filters and an optional uniform sample."""
    corpus = load_jsonl(_require(config.paths.input, 'input'))
    kept = filter_reviews(corpus, config.min_chars, config.rating)
    if config.sample_size is not None:
        kept = sample_uniform(kept, config.sample_size, config.seed)
    write_jsonl(kept, config.output_path('corpus.jsonl'))

    labels = [r.label for r in kept]
    write_json({
        'input': config.paths.input,
        'n_loaded': len(corpus),
        'n_kept': len(kept),
        'min_chars': config.min_chars,
        'rating': config.rating,
        'sample_size': config.sample_size,
        'by_community': {name: len(part) for name, part in sorted(group_by_community(kept).items())},
        'n_deceptive': sum(1 for label in labels if label == 1),
        'n_truthful': sum(1 for label in labels if label == 0),
        'n_unlabeled': sum(1 for label in labels if label is None),
        'provenance': kept.provenance,
    }, config.output_path('ingest_summary.json'))
    logger.info(f"Ingested {len(kept)}/{len(corpus)} reviews")


def cmd_train(config):
    """Selects C by nested cross-validation (unless fixed) and trains the final classifier."""
    # 1. Model selection on the labeled training corpus
    corpus = load_jsonl(_require(config.paths.train, 'train')).labeled_only()
    grid = [config.C] if config.C is not None else config.c_grid
    cv_report = nested_cross_validate(corpus, grid, folds=config.folds, seed=config.seed, n_jobs=config.n_jobs)
    C = cv_report['selected_C']

    # 2. Final model on all training reviews
    model = train(corpus, C, seed=config.seed)
    save_model(model, _model_path(config))
    cv_report['n_train'] = len(corpus)
    cv_report['final_C'] = C
    write_json(cv_report, config.output_path('cv_report.json'))
    logger.info(f"Model trained with C={C}; cross-validated balanced accuracy "
                f"{cv_report['cross_validated']['balanced_accuracy']:.3f}")


def cmd_calibrate(config):
    """
    Estimates sensitivity and specificity and writes the Beta pseudo-counts.
    Uses the saved model's C when a model exists, otherwise --C or grid selection.
    """
    corpus = load_jsonl(_require(config.paths.train, 'train')).labeled_only()
    dev = load_jsonl(_require(config.paths.dev, 'dev'))
    if len(dev) == 0:
        raise ValueError(f"development set is empty: {config.paths.dev}")

    # 1. Cost C, taken from the saved model when there is one
    model_path = _model_path(config)
    model = None
    if os.path.exists(model_path):
        model = load_model(model_path)
        C = model.cost_C
    elif config.C is not None:
        C = config.C
    else:
        logger.info(f"No model at {model_path}; selecting C on the training corpus")
        C = select_C(corpus, config.c_grid, folds=config.folds, seed=config.seed, n_jobs=config.n_jobs)

    # 2. Grouped-CV sensitivity plus dev-set specificity
    result = calibrate(corpus, dev, C, seed=config.seed, model=model, n_jobs=config.n_jobs)
    save_calibration(result, _calibration_path(config))
    logger.info(f"Calibration: eta={result.eta:.4f} theta={result.theta:.4f}")


def cmd_estimate(config):
    """Naive and Bayesian prevalence for one test corpus."""
    model = load_model(_model_path(config))
    cal = load_calibration(_calibration_path(config))
    test = load_jsonl(_require(config.paths.test, 'test'))
    if len(test) == 0:
        raise ValueError(f"test corpus is empty: {config.paths.test}")

    # 1. Classifier outputs
    outputs = predict_corpus(model, test)
    pi_f = positive_rate(outputs)

    # 2. Naive estimate (may be undefined)
    try:
        naive = naive_estimate(pi_f, cal.eta, cal.theta).to_dict()
    except UninformativeClassifierError as exc:
        logger.warning(f"Naive estimate unavailable: {exc}")
        naive = {'error': str(exc), 'pi_f': pi_f, 'eta': cal.eta, 'theta': cal.theta}

    # 3. Bayesian estimate
    gibbs_cfg = config.gibbs_config()
    summary, chains = estimate_prevalence(outputs, cal.beta, cal.gamma, gibbs_cfg)
    write_posterior_csv(chains, gibbs_cfg.alpha, config.output_path('posterior.csv'))

    doc = {
        'test': config.paths.test,
        'n_test': len(test),
        'pi_f': pi_f,
        'naive': naive,
        'bayes': summary.to_dict(),
        'calibration': cal.to_dict(),
        'gibbs': asdict(gibbs_cfg),
        'assumptions': list(cal.assumptions),
    }
    if all(r.label is not None for r in test):
        doc['gold_prevalence'] = float(np.mean(test.labels()))
    write_json(doc, config.output_path('estimates.json'))


def cmd_simulate(config):
    """Writes synthetic corpora with gold labels, plus signal-cost communities."""
    sim = config.simulation
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(4)]

    # 1. Labels and outputs straight from the generative story
    params = GenerativeParams(sim.pi_star, sim.eta_star, sim.theta_star, sim.n_test, seed=seeds[0])
    y, f = generate_labels_outputs(params)
    pd.DataFrame({'y': y, 'f': f}).to_csv(config.output_path('labels_outputs.csv'), index=False)

    # 2. Text corpora: balanced train, truthful dev, pi_star test
    train_corpus = generate_text_corpus(sim.n_train_truthful, sim.n_train_deceptive, sim.vocab_overlap,
                                        seed=seeds[1], id_prefix='train')
    dev = generate_review_population(sim.n_dev, 0.0, sim.vocab_overlap, seed=seeds[2], id_prefix='dev')
    test = generate_review_population(sim.n_test, sim.pi_star, sim.vocab_overlap, seed=seeds[3], id_prefix='test')
    write_jsonl(train_corpus, config.output_path('train.jsonl'))
    write_jsonl(dev, config.output_path('dev.jsonl'))
    write_jsonl(test, config.output_path('test.jsonl'))

    # 3. Signal-cost communities and their profiles
    profiles, communities = [], {}
    for i, entry in enumerate(sim.communities):
        community = generate_signal_cost_community(
            entry['name'], int(entry.get('n_accounts', 2000)),
            first_time_pi=float(entry.get('first_time_pi', 0.15)),
            repeat_pi=float(entry.get('repeat_pi', 0.02)),
            vocab_overlap=float(entry.get('vocab_overlap', sim.vocab_overlap)),
            seed=config.seed + 1000 + i,
        )
        path = config.output_path('communities', f"{_slug(entry['name'])}.jsonl")
        write_jsonl(community, path)
        communities[entry['name']] = {'path': path, 'n_reviews': len(community), **community.metadata}
        if 'posting_cost' in entry and 'exposure_benefit' in entry:
            profiles.append(CommunityProfile.from_dict(entry).to_dict())
    if profiles:
        write_json(profiles, config.output_path('profiles.json'))

    write_json({
        'generative_params': asdict(params),
        'expected_positive_rate': expected_positive_rate(sim.pi_star, sim.eta_star, sim.theta_star),
        'labels_outputs': {'n': int(y.size), 'n_deceptive': int(y.sum()), 'n_positive_outputs': int(f.sum())},
        'train': train_corpus.metadata,
        'dev': dev.metadata,
        'test': test.metadata,
        'communities': communities,
    }, config.output_path('simulation.json'))
    logger.info(f"Simulated test corpus with {test.metadata['n_deceptive']} deceptive of {len(test)} reviews")


def _study_corpora(config):
    """Community name -> corpus, from explicit paths, the grouped test corpus or <out>/communities/."""
    if config.paths.communities:
        return {name: load_jsonl(path) for name, path in sorted(config.paths.communities.items())}
    if config.paths.test:
        return dict(sorted(group_by_community(load_jsonl(config.paths.test)).items()))
    found = sorted(glob.glob(config.output_path('communities', '*.jsonl')))
    if not found:
        raise ConfigError("study needs community corpora (--community NAME=PATH, --test or <out>/communities/)")
    corpora = {}
    for path in found:
        corpus = load_jsonl(path)
        name = corpus[0].community if len(corpus) else os.path.splitext(os.path.basename(path))[0]
        corpora[name] = corpus
    return corpora


def cmd_study(config):
    """One prevalence series per community and reviewer threshold, then the hypothesis summary."""
    model = load_model(_model_path(config))
    cal = load_calibration(_calibration_path(config))
    profiles_path = config.paths.profiles
    if profiles_path is None and os.path.exists(config.output_path('profiles.json')):
        profiles_path = config.output_path('profiles.json')
    profiles = load_profiles(profiles_path)
    gibbs_cfg = config.gibbs_config()

    # 1. One series per community and threshold
    series_set, index, skipped = [], [], []
    for name, corpus in _study_corpora(config).items():
        if len(corpus) == 0:
            logger.warning(f"Community {name}: empty corpus, skipped")
            skipped.append(name)
            continue
        for k in sorted(set(config.thresholds)):
            series = run_series(corpus, model, cal, gibbs_cfg, config.granularity, config.cumulative, k,
                                config.min_bucket_size)
            stem = config.output_path('series', f"{_slug(name)}_k{k}")
            write_series_csv(series, stem + '.csv')
            plot_series(series, stem + '.svg')
            series_set.append(series)
            index.append({
                'community': series.community,
                'policy_k': k,
                'n_reviews': len(series.review_ids),
                'csv': stem + '.csv',
                'svg': stem + '.svg',
                'skipped_buckets': series.skipped,
                'assumptions': series.assumptions,
            })

    # 2. Cross-community comparison
    hypotheses = compare_hypotheses(series_set, profiles)
    hypotheses['series'] = index
    hypotheses['skipped_communities'] = skipped
    write_json(hypotheses, config.output_path('hypotheses.json'))
    logger.info(f"Study wrote {len(series_set)} series; H1={hypotheses['H1_low_cost_exceeds_high_cost']} "
                f"H2={hypotheses['H2_prevalence_decreases_with_k']}")


def cmd_report(config):
    """Collects whatever the other commands wrote into report.json and prints a short summary."""
    # 1. Gather the JSON outputs that exist
    sections = {}
    for key, filename in [('training', 'cv_report.json'), ('calibration', 'calibration.json'),
                          ('estimates', 'estimates.json'), ('study', 'hypotheses.json'),
                          ('simulation', 'simulation.json')]:
        path = config.output_path(filename)
        if os.path.exists(path):
            sections[key] = _read_json(path)
    if not sections:
        raise FileNotFoundError(f"no pipeline outputs found in {config.paths.output_dir}")

    # 2. Series tables and caveats
    series_files = sorted(glob.glob(config.output_path('series', '*.csv')))
    if series_files:
        sections['series'] = {os.path.basename(p): pd.read_csv(p).to_dict(orient='records') for p in series_files}
    sections['caveats'] = [DEV_TRUTHFUL_ASSUMPTION]
    write_json(sections, config.output_path('report.json'))

    # 3. Console summary
    lines = [f"Report for {config.paths.output_dir}"]
    if 'training' in sections:
        cv = sections['training']
        lines.append(f"  classifier: C={cv['final_C']}, cross-validated balanced accuracy "
                     f"{cv['cross_validated']['balanced_accuracy']:.3f}")
    if 'calibration' in sections:
        cal = sections['calibration']
        lines.append(f"  calibration: eta={cal['eta']:.4f} theta={cal['theta']:.4f}")
    if 'estimates' in sections:
        est = sections['estimates']
        naive = est['naive']
        naive_text = naive['error'] if 'error' in naive else f"{naive['pi_naive']:.4f}"
        lo, hi = est['bayes']['pi_ci95']
        lines.append(f"  prevalence: pi_f={est['pi_f']:.4f} naive={naive_text} "
                     f"bayes={est['bayes']['pi_mean']:.4f} [{lo:.4f}, {hi:.4f}]")
    if 'study' in sections:
        study = sections['study']
        lines.append(f"  study: H1 (low cost > high cost) {study['H1_low_cost_exceeds_high_cost']}, "
                     f"H2 (decreasing with k) {study['H2_prevalence_decreases_with_k']}")
    lines.append(f"  caveat: {DEV_TRUTHFUL_ASSUMPTION}")
    print('\n'.join(lines))


COMMANDS = {
    'ingest': cmd_ingest,
    'train': cmd_train,
    'calibrate': cmd_calibrate,
    'estimate': cmd_estimate,
    'simulate': cmd_simulate,
    'study': cmd_study,
    'report': cmd_report,
}


def main(argv=None):
    """Runs one command and maps failures to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        config = validate(apply_overrides(load_config(args.config), args))
        setup_logging(config.paths.output_dir)
        archive_config(config)
        logger.info(f"Running {args.command} (seed={config.seed}, out={config.paths.output_dir})")
        COMMANDS[args.command](config)
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO_ERROR
    except ValueError as exc:
        logger.error(f"Validation error: {exc}")
        return EXIT_VALIDATION_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
