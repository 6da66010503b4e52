from fastapi import Security, HTTPException, status, Request
from fastapi.security.api_key import APIKeyHeader
from src.settings import get_settings

api_key_header = APIKeyHeader(name="access_token", auto_error=False)


async def get_api_key(request: Request, api_key_header: str = Security(api_key_header)):
    expected = get_settings().api_key
    if expected is None:
        # no key configured: the server is local-only
        return api_key_header
    if api_key_header == expected:
        return api_key_header
    else:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED, detail="Forbidden"
        )
