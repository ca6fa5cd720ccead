"""
Base adapter class
"""

from torch import nn


class BaseAdapter(nn.Module):
    """
    Base class for adaptation modules attached at an MHSA or MLP site
    All adapters should inherit from this class

    An adapter maps site tokens [..., N_t, D] to knowledge of the same shape and
    returns exactly zero while its up-projection is at its initial value.
    """

    # True for adapters that re-run the frozen sublayer on the raw residual stream
    reads_raw_tokens = False

    def __init__(self, dim, site):
        """
        Initialize the adapter

        Args:
            dim (int): Backbone channel count D
            site (str): 'mhsa' or 'mlp'
        """
        super().__init__()
        self.dim = dim
        self.site = site

    def forward(self, tokens, block=None):
        """
        Compute knowledge for the given site tokens

        Args:
            tokens (torch.Tensor): [..., N_t, D]
            block (TransformerBlock): Frozen block of the site, for adapters that
                re-run the sublayer

        Returns:
            torch.Tensor: [..., N_t, D]

        Raises:
            NotImplementedError: Subclasses must implement this method
        """
        raise NotImplementedError("Subclasses must implement forward method")

    def flops(self, num_tokens):
        """
        FLOPs (2 x multiply-accumulates) of one forward over one sample

        Args:
            num_tokens (int): N_t including [CLS]

        Returns:
            int: FLOP count

        Raises:
            NotImplementedError: Subclasses must implement this method
        """
        raise NotImplementedError("Subclasses must implement flops method")

    def num_parameters(self):
        return sum(p.numel() for p in self.parameters())
