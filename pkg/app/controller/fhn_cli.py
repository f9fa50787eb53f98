"""Command Line Interface for the FitzHugh-Nagumo mean-field simulator."""

import argparse
from typing import List, Optional

import config
from app.api.distance import verify_ledger
from app.api.lyapunov import check_kernel_admissibility
from app.api.metrics import nonuniform_constants
from app.api.simulation_service import SimulationService
from app.api.verification_service import VerificationService
from app.controller.run_config import RunConfig
from app.logger import default_logger as logger
from app.logger import set_level
from app.models.errors import (AdmissibilityError, ConfigError, DerivationError, DomainError,
                               IntegrationBlowUpError)
from app.storage.run_store import RunStore

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INADMISSIBLE = 3
EXIT_BLOWUP = 4


class FhnCLI:
    """Command Line Interface: params | simulate | couple | verify."""

    def __init__(self):
        self.parser = self.build_parser()

    @staticmethod
    def build_parser() -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", metavar="PATH", help="run configuration file (key = value lines)")
        common.add_argument("--seed", type=int, metavar="U64", help="master seed")
        common.add_argument("--out", metavar="DIR", help="output directory")
        common.add_argument("--replicas", type=int, metavar="K", help="independent replicas")
        common.add_argument("--threads", type=int, metavar="T",
                            help=f"worker threads (default: ${config.THREADS_ENV}, then the config file)")
        common.add_argument("--verbose", action="store_true", help="debug logging")

        parser = argparse.ArgumentParser(prog="fhn", description="Stochastic mean-field FitzHugh-Nagumo simulator")
        sub = parser.add_subparsers(dest="command", required=True)
        sub.add_parser("params", parents=[common], help="derive and verify the coupling ledger")
        sub.add_parser("simulate", parents=[common], help="simulate the N-particle system")
        sub.add_parser("couple", parents=[common], help="simulate coupled system/limit pairs")
        verify = sub.add_parser("verify", parents=[common], help="run one acceptance criterion")
        verify.add_argument("criterion", choices=config.CRITERIA)
        return parser

    def load_config(self, args: argparse.Namespace) -> RunConfig:
        run_config = RunConfig.from_file(args.config) if args.config else RunConfig()
        return run_config.with_overrides(seed=args.seed, out_dir=args.out, replicas=args.replicas)

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Parse arguments, dispatch and map failures to exit codes."""
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_USAGE
        if args.verbose:
            set_level("DEBUG")

        handlers = {
            "params": self.cmd_params,
            "simulate": self.cmd_simulate,
            "couple": self.cmd_couple,
            "verify": self.cmd_verify,
        }
        try:
            run_config = self.load_config(args)
            return handlers[args.command](run_config, args)
        except ConfigError as e:
            logger.error(f"Configuration error: {e}")
            return EXIT_USAGE
        except DerivationError as e:
            logger.error(f"Ledger derivation failed: {e}")
            return EXIT_CHECK_FAILED
        except AdmissibilityError as e:
            logger.error(f"Kernels are not admissible: {e}")
            return EXIT_INADMISSIBLE
        except IntegrationBlowUpError as e:
            logger.error(str(e))
            return EXIT_BLOWUP
        except (DomainError, OSError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            return EXIT_USAGE

    def cmd_params(self, run_config: RunConfig, args: argparse.Namespace) -> int:
        """Print the ledger, verify it and write the manifest."""
        service = SimulationService(run_config, args.threads)
        ledger = service.ledger()
        print("=" * 60)
        print("COUPLING LEDGER")
        print("=" * 60)
        rows = ledger.table_rows()
        width = max(len(name) for name, _ in rows)
        for name, value in rows:
            print(f"{name:<{width}}  {value}")

        report = verify_ledger(ledger)
        admissibility = check_kernel_admissibility(service.params, service.L_X, service.L_C, ledger)
        lya = ledger.lyapunov
        constants = nonuniform_constants(service.params, service.L_X, service.L_C, lya.EH0, lya.B, lya.lam)
        with RunStore(run_config.out_dir) as store:
            store.write_manifest(run_config.to_text(), {
                "ledger": ledger.to_dict(),
                "ledger_checks": report.to_dict(),
                "admissibility": admissibility.to_dict(),
                "nonuniform_constants": constants,
            })

        if not report.passed:
            logger.error(f"{len(report.failures)} ledger check(s) failed")
            return EXIT_CHECK_FAILED
        if not admissibility.passed:
            logger.warning("Ledger is valid but the kernels are outside the uniform-in-time regime")
            return EXIT_INADMISSIBLE
        logger.info("Ledger verified and kernels admissible")
        return EXIT_OK

    def _simulation_run(self, mode: str, run_config: RunConfig, args: argparse.Namespace) -> int:
        service = SimulationService(run_config, args.threads)
        with RunStore(run_config.out_dir) as store:
            # thread count stays out of the manifest: outputs do not depend on it
            logger.info(f"{mode}: {service.threads} worker thread(s)")
            sections = {"mode": mode}
            if mode == "couple":
                sections["ledger"] = service.ledger().to_dict()
            store.write_manifest(run_config.to_text(), sections)
            service.run(mode, store)
        return EXIT_OK

    def cmd_simulate(self, run_config: RunConfig, args: argparse.Namespace) -> int:
        return self._simulation_run("simulate", run_config, args)

    def cmd_couple(self, run_config: RunConfig, args: argparse.Namespace) -> int:
        return self._simulation_run("couple", run_config, args)

    def cmd_verify(self, run_config: RunConfig, args: argparse.Namespace) -> int:
        with RunStore(run_config.out_dir) as store:
            verdict = VerificationService(run_config, args.threads).run(args.criterion, store)
        return EXIT_OK if verdict["pass"] else EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    return FhnCLI().run(argv)
