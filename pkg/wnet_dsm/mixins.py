from logbook import Logger


class MainMixin(object):

    name = 'Main'

    components = {}
    preferences = None

    def __init__(self):

        self.components = {}

    def registerComponent(self, name, component):

        self.components[name] = component

        return component


class ComponentMixin(object):

    name = 'Component'
    preferences = None

    def __init__(self):

        if self.preferences:
            self.preferences.sigTreeStateChanged.\
                connect(self.updatePreferences)

        self._logger = Logger(self.name)

    def updatePreferences(self, *args):

        pass
