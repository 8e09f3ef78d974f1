"""Weighted-Lasso k-means command line."""
from lassokmeans.cli.commands import main


if __name__ == "__main__":
    main()
