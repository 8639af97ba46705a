"""
MCP server exposing decoding tools over stdio.

Usage:
    viterbi-specdec-mcp

Requires the optional `mcp` extra.
"""

import asyncio
import json
import logging
import sys
from typing import Any

from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import TextContent, Tool

from .config import DecodeMode, get_settings
from .tools import bench_point, decode_session, transition_info

logger = logging.getLogger("viterbi_specdec")

server = Server("viterbi-specdec")

RESULT_SIZE_WARNING = 8000


def _compact_json(data: dict) -> str:
    """Convert dict to compact JSON string."""
    return json.dumps(data, separators=(",", ":"), ensure_ascii=False)


# =============================================================================
# Tool Definitions
# =============================================================================

_MODES = [m.value for m in DecodeMode]


def get_tools() -> list[Tool]:
    """All tools; every one is read-only apart from CPU time."""
    return [
        Tool(
            name="transition_info",
            description="Summarize a binary transition file: vocabulary size, smoothing alpha, smallest entry, row-sum error.",
            inputSchema={
                "type": "object",
                "properties": {
                    "path": {"type": "string", "description": "Transition file path"},
                },
                "required": ["path"],
            },
        ),
        Tool(
            name="decode_session",
            description="Run one multi-token decode session with synthetic Markov heads. Returns invocation count, Viterbi op count, timings and the generated tokens (max 256).",
            inputSchema={
                "type": "object",
                "properties": {
                    "transitions": {"type": "string", "description": "Transition file path"},
                    "length": {
                        "type": "integer",
                        "minimum": 1,
                        "maximum": 4096,
                        "description": "Target sequence length including the prompt",
                    },
                    "n": {"type": "integer", "minimum": 1, "description": "Prediction heads (default 8)"},
                    "k": {"type": "integer", "minimum": 1, "description": "Top-k per head (default 3)"},
                    "mode": {"type": "string", "enum": _MODES},
                    "seed": {"type": "integer", "default": 0},
                    "prompt": {"type": "array", "items": {"type": "integer"}, "default": []},
                    "gamma": {"type": "number", "minimum": 0, "description": "Far-head temperature exponent"},
                },
                "required": ["transitions", "length"],
            },
        ),
        Tool(
            name="bench_point",
            description="Measure one (n, k, mode) point of the bench grid over a number of trials.",
            inputSchema={
                "type": "object",
                "properties": {
                    "transitions": {"type": "string"},
                    "n": {"type": "integer", "minimum": 1},
                    "k": {"type": "integer", "minimum": 1},
                    "length": {"type": "integer", "minimum": 1, "maximum": 4096},
                    "mode": {"type": "string", "enum": _MODES, "default": "viterbi"},
                    "trials": {"type": "integer", "minimum": 1, "maximum": 100, "default": 1},
                    "seed": {"type": "integer", "default": 0},
                },
                "required": ["transitions", "n", "k", "length"],
            },
        ),
    ]


# =============================================================================
# MCP Handlers
# =============================================================================


@server.list_tools()
async def list_tools() -> list[Tool]:
    """List all available tools."""
    return get_tools()


@server.call_tool()
async def call_tool(name: str, arguments: dict[str, Any]) -> list[TextContent]:
    """Execute a tool and return results."""
    logger.info(f"Tool called: {name}")
    logger.debug(f"Arguments: {arguments}")

    try:
        result = await _dispatch_tool(name, arguments)
        json_result = _compact_json(result)
        if len(json_result) > RESULT_SIZE_WARNING:
            logger.warning(f"Tool {name} returned {len(json_result)} bytes")
        return [TextContent(type="text", text=json_result)]

    except Exception as e:
        logger.error(f"Tool {name} error: {e}")
        error_result = {
            "error": True,
            "code": 2,
            "message": str(e)[:200],
            "notes": ["internal_error"],
        }
        return [TextContent(type="text", text=_compact_json(error_result))]


async def _dispatch_tool(name: str, arguments: dict[str, Any]) -> dict:
    """Run the tool on a worker thread; decoding is CPU bound."""
    if name == "transition_info":
        return await asyncio.to_thread(transition_info, path=arguments["path"])

    elif name == "decode_session":
        return await asyncio.to_thread(
            decode_session,
            transitions=arguments["transitions"],
            length=arguments["length"],
            n=arguments.get("n"),
            k=arguments.get("k"),
            mode=arguments.get("mode"),
            seed=arguments.get("seed", 0),
            prompt=arguments.get("prompt"),
            gamma=arguments.get("gamma"),
        )

    elif name == "bench_point":
        return await asyncio.to_thread(
            bench_point,
            transitions=arguments["transitions"],
            n=arguments["n"],
            k=arguments["k"],
            length=arguments["length"],
            mode=arguments.get("mode", "viterbi"),
            trials=arguments.get("trials", 1),
            seed=arguments.get("seed", 0),
        )

    else:
        return {
            "error": True,
            "code": 1,
            "message": f"Unknown tool: {name}",
            "notes": [],
        }


# =============================================================================
# Server Entry Point
# =============================================================================


async def run_stdio() -> None:
    """Run the MCP server using stdio transport."""
    settings = get_settings()
    logger.info("Starting viterbi-specdec MCP server (stdio mode)")
    logger.info(f"Configuration: {settings.get_safe_config_summary()}")

    async with stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            server.create_initialization_options(),
        )
    logger.info("Server shutdown complete")


def main() -> None:
    """Main entry point for stdio mode."""
    logging.basicConfig(
        level=get_settings().log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    try:
        asyncio.run(run_stdio())
    except KeyboardInterrupt:
        logger.info("Received interrupt signal")
    except Exception as e:
        logger.error(f"Server error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
