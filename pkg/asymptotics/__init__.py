# Package marker for tail asymptotics modules.
