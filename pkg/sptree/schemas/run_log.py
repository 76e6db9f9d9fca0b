from pydantic import BaseModel
from datetime import datetime
from typing import Optional


class RunLogBase(BaseModel):
    command: str
    status: str
    config_hash: Optional[str] = None
    error_message: Optional[str] = None
    result: Optional[str] = None
    is_successful: bool = False


class RunLogCreate(RunLogBase):
    pass


class RunLogUpdate(BaseModel):
    status: Optional[str] = None
    completed_at: Optional[datetime] = None
    exit_code: Optional[int] = None
    error_message: Optional[str] = None
    result: Optional[str] = None
    is_successful: Optional[bool] = None


class RunLogResponse(RunLogBase):
    id: int
    started_at: datetime
    completed_at: Optional[datetime] = None
    exit_code: Optional[int] = None

    class Config:
        from_attributes = True
