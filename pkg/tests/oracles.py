from ctrcbo.oracles import *  # noqa: F401,F403
