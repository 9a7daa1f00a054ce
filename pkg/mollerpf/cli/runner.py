"""Shim to run the CLI as ``python -m mollerpf.cli.runner``.

Delegates to the top-level ``cli.runner`` module.
"""

from cli.runner import *  # noqa: F401,F403

if __name__ == "__main__":
    import sys

    from cli.runner import main

    sys.exit(main())
