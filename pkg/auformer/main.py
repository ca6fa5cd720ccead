"""
Main entry point for the AUFormer command-line interface
"""

import logging

import torch

from auformer import cli
from auformer.utils.settings import LOG_LEVEL, THREADS


def configure(level=LOG_LEVEL, threads=THREADS):
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(threads)


def main():
    configure()
    cli(prog_name="auformer")


if __name__ == "__main__":
    main()
