class MasksemblesError(Exception):
    pass


class ValidationError(MasksemblesError, ValueError):
    pass


class ShapeError(ValidationError):
    pass


class FormatError(ValidationError):
    pass


class NonFiniteError(MasksemblesError, ArithmeticError):
    pass


class TrainingError(MasksemblesError):
    def __init__(self, message, epoch):
        super().__init__('%s (epoch %d)' % (message, epoch))
        self.epoch = epoch


class UndefinedDiversityError(MasksemblesError, ZeroDivisionError):
    pass


def require(condition, message, *args):
    if not condition:
        raise ValidationError(message % args if args else message)
