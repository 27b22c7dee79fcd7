# Every subpackage holds one part of nslif. Packages whose <name>/<name>.py
# defines a Module subclass serve nslif.py commands.
