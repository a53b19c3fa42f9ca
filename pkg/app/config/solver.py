import os


def _parse_int(value, var_name):
    """Parse integer value with error handling."""
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"Invalid integer value for {var_name}: {value}") from None


def _parse_float(value, var_name):
    """Parse float value with error handling."""
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"Invalid float value for {var_name}: {value}") from None


def load_solver_config() -> dict:
    """
    Load CCP and QP solver defaults from environment variables.
    Returns a dict of keyword arguments for CcpConfig; unset variables are omitted.
    """
    config_kwargs = {}

    config_mapping = {
        "DMPC_QP_TOL": ("qp_tol", lambda x: _parse_float(x, "DMPC_QP_TOL")),
        "DMPC_QP_MAX_ITER": ("qp_max_iter", lambda x: _parse_int(x, "DMPC_QP_MAX_ITER")),
        "DMPC_CCP_RHO_C0": ("rho_c0", lambda x: _parse_float(x, "DMPC_CCP_RHO_C0")),
        "DMPC_CCP_RHO_C_MAX": ("rho_c_max", lambda x: _parse_float(x, "DMPC_CCP_RHO_C_MAX")),
        "DMPC_CCP_MU": ("mu", lambda x: _parse_float(x, "DMPC_CCP_MU")),
        "DMPC_CCP_RHO_X": ("rho_x", lambda x: _parse_float(x, "DMPC_CCP_RHO_X")),
        "DMPC_CCP_OBJ_TOL": ("obj_tol", lambda x: _parse_float(x, "DMPC_CCP_OBJ_TOL")),
        "DMPC_CCP_VIOL_TOL": ("viol_tol", lambda x: _parse_float(x, "DMPC_CCP_VIOL_TOL")),
        "DMPC_CCP_MAX_ITER": ("max_iter", lambda x: _parse_int(x, "DMPC_CCP_MAX_ITER")),
    }

    for env_var, (config_key, parser) in config_mapping.items():
        value = os.getenv(env_var)
        if value:
            try:
                config_kwargs[config_key] = parser(value)
            except ValueError as e:
                raise ValueError(f"Configuration error for {env_var}: {e}") from e

    return config_kwargs
