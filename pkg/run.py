import logging

import click

from commands import register_commands


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging (INFO, then DEBUG).")
def cli(verbose):
    """Train, evaluate and apply item-item MRF recommenders."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# 註冊所有子命令
register_commands(cli)

if __name__ == "__main__":
    cli()
