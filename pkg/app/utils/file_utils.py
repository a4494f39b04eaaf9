import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, Iterable, Optional

logger = logging.getLogger("app.utils.file_utils")


def get_lines_hash(lines: Iterable[str], algorithm: str = "sha256") -> str:
   """Hash a sequence of text lines, newline separated"""
   hash_obj = hashlib.new(algorithm)
   for line in lines:
       hash_obj.update(line.encode("utf-8"))
       hash_obj.update(b"\n")
   return hash_obj.hexdigest()


def safe_filename(filename: str) -> str:
   """
   Create a safe filename by removing/replacing problematic characters

   Args:
       filename: Original filename

   Returns:
       Safe filename string
   """
   safe_name = re.sub(r'[<>:"/\\|?*\s]', '_', filename)
   safe_name = safe_name.strip(' ._')

   if not safe_name:
       safe_name = "unnamed"

   return safe_name[:255]


def ensure_directory_exists(directory_path: Path) -> bool:
   """
   Ensure a directory exists, create if it doesn't

   Args:
       directory_path: Path to the directory

   Returns:
       True if directory exists or was created successfully
   """
   try:
       directory_path.mkdir(parents=True, exist_ok=True)
       return True
   except Exception as e:
       logger.error(f"Failed to create directory {directory_path}: {e}")
       return False


def read_json(file_path: Path) -> Any:
   """
   Load a JSON document

   Raises:
       OSError: file missing or unreadable
       ValueError: malformed JSON
   """
   with open(file_path, "r", encoding="utf-8") as f:
       return json.load(f)


def write_json(file_path: Path, data: Any, indent: Optional[int] = 2) -> Path:
   """Write a JSON document, creating parent directories"""
   file_path = Path(file_path)
   if not ensure_directory_exists(file_path.parent):
       raise OSError(f"Cannot create directory {file_path.parent}")
   with open(file_path, "w", encoding="utf-8") as f:
       json.dump(data, f, indent=indent, sort_keys=True)
       f.write("\n")
   return file_path
