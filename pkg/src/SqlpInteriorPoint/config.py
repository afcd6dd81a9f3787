import os
import yaml

DEFAULT_CONFIG_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.yaml")

# Environment variable -> key of the solver section.
SOLVER_ENV = {
    "SQLP_DIRECTION": "direction",
    "SQLP_EPS": "eps",
    "SQLP_KAPPA": "kappa",
    "SQLP_MAXITER": "maxiter",
    "SQLP_GAMMA": "gamma",
}


class Config:
    """
    Solver defaults read from YAML, with ``SQLP_*`` environment overrides.

    Attributes
    ----------
    config : dict
        Parsed document holding the ``solver`` and ``logging`` sections.
    """

    def __init__(self, config_file=None):
        """
        Read ``config_file`` and apply the overrides listed in ``SOLVER_ENV``
        plus ``SQLP_LOG_LEVEL``.

        Parameters
        ----------
        config_file : str, optional
            Path to the YAML configuration file (default is the ``config.yaml``
            shipped with the package).
        """
        with open(config_file or DEFAULT_CONFIG_FILE, "r") as file:
            self.config = yaml.safe_load(file) or {}

        solver = dict(self.config.get("solver") or {})
        for variable, key in SOLVER_ENV.items():
            solver[key] = os.getenv(variable, solver.get(key))
        self.config["solver"] = solver
        self.config["logging"] = {
            "level": os.getenv("SQLP_LOG_LEVEL", (self.config.get("logging") or {}).get("level", "INFO")),
        }

    @property
    def solver(self):
        """
        Parameters handed to ``SolverOptions.from_config``.

        Returns
        -------
        dict
            Solver parameters; values overridden from the environment are strings.
        """
        return self.config["solver"]

    @property
    def logging(self):
        """
        Settings for the handler the command line installs.

        Returns
        -------
        dict
            The logging settings, with ``level`` as a level name.
        """
        return self.config["logging"]
