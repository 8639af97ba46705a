"""
Viterbi SpecDec - Viterbi-based speculative decoding for multi-token prediction.

Provides:
- Bigram transition estimation from token corpora
- Top-k search-space reduction over n prediction heads
- Viterbi path selection with a brute-force oracle
- Multi-token decode sessions and a CSV benchmark harness
"""

__version__ = "1.0.0"
