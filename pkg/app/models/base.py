from pydantic import BaseModel, ConfigDict


class BaseAPIModel(BaseModel):
    """Base model for API requests and responses"""

    model_config = ConfigDict(
        # Reject unknown keys so configuration typos surface early
        extra="forbid",
        # Validate assignment
        validate_assignment=True,
        # Use enum values
        use_enum_values=True,
        # Populate by name
        populate_by_name=True
    )


class DomainModel(BaseModel):
    """Immutable value object shared by the solvers"""

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        arbitrary_types_allowed=True,
    )

