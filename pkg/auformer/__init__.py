"""
AUFormer: per-AU Mixture-of-Knowledge Experts around a frozen Vision Transformer,
with the MDWA/WDI loss family, a synthetic data generator and a
train/eval/gradient-check harness
"""

import click


@click.group()
def cli():
    """AUFormer command-line interface."""


# Import commands after the group is created
from auformer.commands import data_cmd, train_cmd, verify_cmd  # noqa: E402

# Register commands
cli.add_command(data_cmd.gen_data)
cli.add_command(train_cmd.train_command)
cli.add_command(train_cmd.eval_command)
cli.add_command(verify_cmd.gradcheck)
cli.add_command(verify_cmd.params)
cli.add_command(verify_cmd.curves)
