import uvicorn

from src.settings import get_settings

if __name__ == "__main__":
    settings = get_settings()
    uvicorn.run(
        "src.api.server:app", host="127.0.0.1", port=3000, log_level=settings.log_level.lower()
    )
