from gcbridge.scenario.executor import Executor, RunReport, execute, run_script
from gcbridge.scenario.oracle import oracle_reachable
from gcbridge.scenario.parser import Command, parse, render
from gcbridge.scenario.world import World

__all__ = ["Command", "Executor", "RunReport", "World", "execute", "oracle_reachable",
           "parse", "render", "run_script"]
