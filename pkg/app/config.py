from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Optional


class Settings(BaseSettings):
    """Application configuration settings"""

    # Application settings
    app_name: str = "VN Embedding Decomposition"
    debug: bool = False
    host: str = "0.0.0.0"
    port: int = 8000
    cors_origins: List[str] = ["http://localhost:3000", "http://127.0.0.1:3000"]

    # LP engine tolerances and limits
    lp_tol_feas: float = 1e-7
    lp_tol_cs: float = 1e-6
    lp_tol_gap: float = 1e-6
    lp_max_iterations: int = 50000
    lp_degenerate_pivot_limit: int = 50
    lp_refactor_every: int = 64
    lp_scaling: bool = True
    ilp_node_limit: int = 20000
    brute_force_max_vars: int = 20

    # Path discovery
    path_k_max: int = 4
    path_hop_limit: Optional[int] = None

    # Decomposition defaults
    step_rule: str = "diminishing"
    step_scale: float = 0.5
    max_iterations: int = 100
    gap_tolerance: float = 1e-4
    parallel_subproblems: bool = False
    subproblem_workers: int = 4

    # Signaling model
    message_header_bytes: int = 16
    message_scalar_bytes: int = 8
    message_latency_seconds: float = 0.0

    # Output
    output_dir: str = "results"
    report_format: str = "csv"

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        # Ignore unrelated variables in .env
        extra="ignore",
    )

    def __init__(self, **kwargs):
        super().__init__(**kwargs)

        # Post-init processing
        self._validate_tolerances()
        self._validate_protocol_model()

    def _validate_tolerances(self):
        """Reject non-positive solver tolerances and limits"""
        bad = [
            name
            for name in ("lp_tol_feas", "lp_tol_cs", "lp_tol_gap")
            if getattr(self, name) <= 0
        ]
        if self.lp_max_iterations < 1:
            bad.append("lp_max_iterations")
        if self.ilp_node_limit < 1:
            bad.append("ilp_node_limit")
        if bad:
            raise ValueError(f"Settings must be positive: {', '.join(bad)}")

    def _validate_protocol_model(self):
        """Message sizing must produce strictly positive payloads"""
        if self.message_header_bytes + self.message_scalar_bytes <= 0:
            raise ValueError("Message byte model must produce positive sizes")
        if self.message_latency_seconds < 0:
            raise ValueError("message_latency_seconds cannot be negative")

    @property
    def engine_config(self) -> dict:
        """Get LP engine configuration dictionary"""
        return {
            "tol_feas": self.lp_tol_feas,
            "tol_cs": self.lp_tol_cs,
            "tol_gap": self.lp_tol_gap,
            "max_iterations": self.lp_max_iterations,
            "degenerate_pivot_limit": self.lp_degenerate_pivot_limit,
            "refactor_every": self.lp_refactor_every,
            "scaling": self.lp_scaling,
        }

    @property
    def protocol_config(self) -> dict:
        """Get signaling byte-model configuration"""
        return {
            "header_bytes": self.message_header_bytes,
            "scalar_bytes": self.message_scalar_bytes,
            "latency_seconds": self.message_latency_seconds,
        }


# Global settings instance
settings = Settings()
