#!/usr/bin/env python3
"""
Entry point for the GroPLE MCP Server.

Usage:
    python run.py              # Run with stdio transport (local)
    python run.py --http       # Run with SSE transport
"""

import os
import sys
import traceback


def main():
    try:
        print(f"[grople-mcp] Starting server...", file=sys.stderr, flush=True)
        print(f"[grople-mcp] MCP_TRANSPORT={os.environ.get('MCP_TRANSPORT')}", file=sys.stderr, flush=True)
        print(f"[grople-mcp] PORT={os.environ.get('PORT')}", file=sys.stderr, flush=True)

        from grople.server import main as server_main

        server_main()
    except Exception as e:
        print(f"[grople-mcp] FATAL ERROR: {e}", file=sys.stderr, flush=True)
        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
