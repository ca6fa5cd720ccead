"""
Command modules registered on the root command group
"""

from auformer.commands import data_cmd, train_cmd, verify_cmd

__all__ = ['data_cmd', 'train_cmd', 'verify_cmd']
