"""
Process settings read from the environment
"""

import os

# Worker cap for torch intra-op threads and the dataset generator pool
THREADS = max(1, int(os.environ.get('AUFORMER_THREADS', os.cpu_count() or 1)))
LOG_LEVEL = os.environ.get('AUFORMER_LOG_LEVEL', 'INFO').upper()
