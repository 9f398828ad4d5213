"""
Script to build and study compressed sensing matrices made of additive character sequences
over GF(p^m).
Capabilities include:
- Building the K x N sensing matrix for a construction and exporting it with a manifest
- Verifying its coherence against the Welch bound and its tight-frame property
- Condition-number statistics of random column subsets, next to Gaussian matrices
- Matching pursuit recovery rates, noiseless and over an SNR grid, next to partial Fourier matrices
- Dumping the LFSR output sequence of a single channel
"""
import logging
import sys
import time
from argparse import ArgumentParser
from typing import Optional

from util import __version__
from util import output
from util.analysis import block_orthonormality
from util.analysis import check_invariants
from util.analysis import coherence
from util.analysis import compare_with_gaussian
from util.analysis import condition_stats
from util.analysis import EigenConvergenceError
from util.analysis import frame_test
from util.analysis import InvariantViolationError
from util.analysis import log_sparsity_bound
from util.analysis import max_guaranteed_sparsity
from util.analysis import sparsity_bound
from util.cache import matrix_cache
from util.cache import write_sequence
from util.config import ConfigError
from util.config import default_field_cap
from util.config import FIELD_BY_KEY
from util.config import from_sources
from util.config import load_config_file
from util.config import RunConfig
from util.galois import build_field
from util.galois import FieldContext
from util.galois import PrimePoly
from util.lfsr import combined_generator
from util.lfsr import generate
from util.lfsr import sequence_period
from util.recovery import MpConfig
from util.recovery import run_noiseless_experiment
from util.recovery import run_noisy_experiment
from util.sensing import additive_character_family
from util.sensing import ADDITIVE_CHARACTER
from util.sensing import build_matrix
from util.sensing import partial_fourier_family
from util.sensing import SensingMatrix

logger = logging.getLogger("additive_cs")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


def configure_logging() -> None:
    logging.basicConfig(
        level=logging.DEBUG,
        format="%(asctime)s %(name)-12s %(levelname)-8s %(message)s",
        filename="app.log",
    )
    ch = logging.StreamHandler()
    ch.setLevel(logging.INFO)
    ch.setFormatter(logging.Formatter("%(message)s"))
    logging.getLogger("").addHandler(ch)


def build_context(config: RunConfig) -> FieldContext:
    modulus = PrimePoly.parse(config.p, config.poly) if config.poly else None
    return build_field(config.p, config.m, modulus, cap=default_field_cap())


def load_matrix(config: RunConfig, ctx: FieldContext) -> SensingMatrix:
    """Build the configured matrix, reusing the on-disk cache for dense builds.

    :param config: The validated run configuration
    :param ctx: The field the construction lives in
    :return: The SensingMatrix (lazy when requested or above the dense cap)
    """
    spec = config.spec
    if config.lazy:
        return build_matrix(spec, ctx, lazy=True)

    matrix_cache.initialize(spec, ctx.modulus)
    if config.bust_cache:
        matrix_cache.bust()
    else:
        entries = matrix_cache.load()
        if entries is not None and entries.shape == (spec.K, spec.N):
            logger.info("Using cached %sx%s matrix", spec.K, spec.N)
            return SensingMatrix(
                spec.K, spec.N, ADDITIVE_CHARACTER, entries=entries, spec=spec, field=ctx
            )

    matrix = build_matrix(spec, ctx)
    if not matrix.is_lazy:
        matrix_cache.save(matrix.to_dense())
    return matrix


def manifest_pairs(config: RunConfig, ctx: FieldContext, matrix=None) -> dict:
    pairs = {"version": __version__, "command": config.command}
    if matrix is not None:
        pairs.update({"K": matrix.K, "N": matrix.N, "kind": matrix.kind})
    pairs.update(config.to_pairs())
    pairs["poly"] = ctx.modulus.serialize()
    return pairs


def cmd_build(config: RunConfig) -> None:
    ctx = build_context(config)
    matrix = load_matrix(config, ctx)
    with output.OutputSession(config.out_path) as session:
        start_time = time.time()
        logging.info("\nWriting %sx%s matrix...", matrix.K, matrix.N)
        output.write_matrix(matrix, session.path("matrix.txt"))
        if config.matrix_csv:
            output.write_matrix_csv(matrix, session.path("matrix.csv"))
        output.write_manifest(
            manifest_pairs(config, ctx, matrix), session.path("build_manifest.txt")
        )
        logging.info("--- %s seconds ---", (time.time() - start_time))
    print(f"Modulus: {ctx.modulus}")
    print(f"Wrote {matrix.K}x{matrix.N} matrix to {config.out_path / 'matrix.txt'}")


def cmd_verify(config: RunConfig) -> None:
    ctx = build_context(config)
    matrix = load_matrix(config, ctx)
    spec = config.spec
    with output.OutputSession(config.out_path, keep_on=(InvariantViolationError,)) as session:
        report = coherence(matrix, workers=config.workers)
        frame = frame_test(matrix)
        output.write_coherence_csv(matrix, report, session.path("coherence.csv"))
        output.write_manifest(
            manifest_pairs(config, ctx, matrix), session.path("verify_manifest.txt")
        )
        bound = sparsity_bound(spec)
        print(output.format_coherence_report(matrix, report, frame, bound))
        print(f"Largest guaranteed sparsity: {max_guaranteed_sparsity(bound)}")
        print("Log-form sparsity bound: {:.4f}".format(log_sparsity_bound(spec.K, spec.N)))
        logger.info("Block orthonormality deviation: %s", block_orthonormality(spec, ctx))
        check_invariants(matrix, report, frame)


def cmd_spectra(config: RunConfig) -> None:
    ctx = build_context(config)
    matrix = load_matrix(config, ctx)
    with output.OutputSession(config.out_path) as session:
        stats = []
        for s in config.s_range:
            stats.append(condition_stats(matrix, s, config.trials, config.seed, config.workers))
            stats.append(
                compare_with_gaussian(matrix.K, s, config.trials, config.seed, config.workers)
            )
        output.write_condstats_csv(stats, session.path("condstats.csv"))
        output.write_manifest(
            manifest_pairs(config, ctx, matrix), session.path("spectra_manifest.txt")
        )
    print(output.format_condition_stats(stats))


def _recovery_families(matrix: SensingMatrix) -> list:
    return [additive_character_family(matrix), partial_fourier_family(matrix.K, matrix.N)]


def cmd_recover(config: RunConfig) -> None:
    ctx = build_context(config)
    matrix = load_matrix(config, ctx)
    with output.OutputSession(config.out_path) as session:
        report = run_noiseless_experiment(
            _recovery_families(matrix),
            config.s_range,
            config.trials,
            MpConfig(max_iterations=config.max_iterations),
            config.seed,
            config.workers,
            keep_trials=config.trial_log,
        )
        output.write_recovery_csv(report, session.path("recovery_noiseless.csv"))
        if config.trial_log:
            output.write_trial_log(report, session.path("recovery_noiseless_trials.csv"))
        output.write_manifest(
            manifest_pairs(config, ctx, matrix), session.path("recover_manifest.txt")
        )
    print(output.format_recovery_report(report))


def cmd_recover_noisy(config: RunConfig) -> None:
    ctx = build_context(config)
    matrix = load_matrix(config, ctx)
    with output.OutputSession(config.out_path) as session:
        report = run_noisy_experiment(
            _recovery_families(matrix),
            config.s_range,
            config.snr_grid,
            config.trials,
            MpConfig.noisy(max_iterations=config.max_iterations),
            config.seed,
            config.workers,
            keep_trials=config.trial_log,
        )
        output.write_recovery_csv(report, session.path("recovery_noisy.csv"))
        if config.trial_log:
            output.write_trial_log(report, session.path("recovery_noisy_trials.csv"))
        output.write_manifest(
            manifest_pairs(config, ctx, matrix), session.path("recover_noisy_manifest.txt")
        )
    print(output.format_recovery_report(report))


def cmd_sequence(config: RunConfig) -> None:
    ctx = build_context(config)
    r, b = config.exponents[0], config.coefficient
    gen = combined_generator(ctx, [r], [b])
    sequence = generate(gen, gen.period)
    with output.OutputSession(config.out_path) as session:
        write_sequence(session.path(f"sequence_r{r}_b{b}.txt"), sequence, ctx.p, ctx.m, r, b)
    spec, _ = gen.channels[0]
    print(f"Feedback polynomial: {spec.feedback_polynomial}")
    print(f"Least period: {sequence_period(sequence)}")


COMMAND_HANDLERS = {
    "build": cmd_build,
    "verify": cmd_verify,
    "spectra": cmd_spectra,
    "recover": cmd_recover,
    "recover-noisy": cmd_recover_noisy,
    "sequence": cmd_sequence,
}

COMMAND_HELP = {
    "build": "build the sensing matrix and export it with a manifest",
    "verify": "scan the coherence and test the tight-frame property",
    "spectra": "condition-number statistics next to Gaussian matrices",
    "recover": "noiseless matching pursuit recovery rates",
    "recover-noisy": "matching pursuit recovery rates over an SNR grid",
    "sequence": "dump the LFSR output of one channel (--r, --b)",
}


class CommandParser(ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_file", metavar="FILE", help="key=value file")
    for flag, metavar, help_text in (
        ("p", "P", "odd prime characteristic (default 3)"),
        ("m", "M", "extension degree (default 4)"),
        ("h", "H", "number of exponents (default 2)"),
        ("d", "D", "largest exponent (default 2)"),
        ("r", "R1,..,RH", "exponents, e.g. 1,2"),
        ("seed", "SEED", "run seed (default 2011)"),
        ("trials", "TRIALS", "trials per condition (default 2000)"),
        ("s", "RANGE", "sparsity levels, e.g. 1..10 or 5..40:5"),
        ("snr", "RANGE", "SNR grid in dB, e.g. 0..40:5 or inf"),
        ("max-iter", "N", "matching pursuit iteration limit (default 100)"),
        ("out", "DIR", "output directory (default results)"),
        ("poly", "C0,..,CM", "primitive modulus, constant term first"),
        ("b", "B", "field element index of the sequence coefficient"),
        ("workers", "N", "worker count (default: ADDITIVE_CS_WORKERS or CPU count)"),
    ):
        common.add_argument(
            f"--{flag}", dest=flag.replace("-", "_"), metavar=metavar, help=help_text
        )
    common.add_argument(
        "--lazy",
        dest="lazy",
        action="store_true",
        default=None,
        help="generate columns on demand instead of storing the matrix",
    )
    common.add_argument(
        "--bust-cache",
        dest="bust_cache",
        action="store_true",
        default=None,
        help="clear out any cached matrix for this construction",
    )
    common.add_argument(
        "--trial-log",
        dest="trial_log",
        action="store_true",
        default=None,
        help="also write the per-trial squared errors",
    )
    common.add_argument(
        "--csv",
        dest="matrix_csv",
        action="store_true",
        default=None,
        help="also export the matrix as CSV",
    )

    parser = CommandParser(description="Additive character compressed sensing toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for command, help_text in COMMAND_HELP.items():
        subparsers.add_parser(command, parents=[common], help=help_text)
    return parser


def config_from_args(args) -> RunConfig:
    """Layer the config file (if any) and the given flags over the defaults."""
    values = vars(args)
    flag_values = {}
    for key, (name, parse) in FIELD_BY_KEY.items():
        raw = values.get(key.replace("-", "_"))
        if raw is not None:
            flag_values[name] = parse(raw)
    for name in ("bust_cache", "trial_log", "matrix_csv"):
        flag_values[name] = values.get(name)
    file_values = load_config_file(args.config_file) if args.config_file else None
    return from_sources(args.command, file_values, flag_values)


def main(argv: Optional[list] = None) -> int:
    """Run one command and map failures to exit codes.

    :param argv: Command-line arguments, sys.argv[1:] when None
    :return: 0 on success, 1 for invalid parameters, 2 for a violated invariant or a solver
        that did not converge, 3 for I/O errors
    """
    try:
        args = build_parser().parse_args(argv)
        config = config_from_args(args).validate()
        start_time = time.time()
        logger.debug("Running %s with %s", config.command, config)
        COMMAND_HANDLERS[config.command](config)
        logging.info("--- %s seconds ---", (time.time() - start_time))
    except InvariantViolationError as e:
        logger.error("Invariant violated: %s", e)
        return EXIT_INVARIANT
    except EigenConvergenceError as e:
        logger.error("Eigenvalue solver failed: %s", e)
        return EXIT_INVARIANT
    except ValueError as e:
        logger.error("ERROR: %s", e)
        return EXIT_INVALID
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    return EXIT_OK


def run() -> None:
    configure_logging()
    sys.exit(main())


if __name__ == "__main__":
    run()
