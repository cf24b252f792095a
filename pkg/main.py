from dotenv import load_dotenv

from app.cli import cli

load_dotenv()

if __name__ == "__main__":
    cli()
