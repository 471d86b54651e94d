"""Allow running as: python -m rodshell"""

from .cli import main

main()
