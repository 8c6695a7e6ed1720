#!/usr/bin/env python3
"""
Error types for the missing-data SBM toolkit
InputError covers bad parameters, shapes and files; DegeneracyError covers
numerical situations no fallback value can repair.
"""

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_DEGENERATE = 3


class MissingSbmError(Exception):
    """Base class for every error raised by the toolkit"""
    exit_code = 1


class InputError(MissingSbmError, ValueError):
    """Invalid parameters, inconsistent shapes, unreadable or malformed files"""
    exit_code = EXIT_INPUT_ERROR


class DegeneracyError(MissingSbmError, ArithmeticError):
    """Numerical degeneracy: repeated roots, singular systems, nothing observed"""
    exit_code = EXIT_DEGENERATE
