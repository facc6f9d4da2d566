"""
Forms validating the tables of a scenario TOML file.
One form per table; errors carry the key path of the offending entry.
"""
import numbers

from django import forms
from django.conf import settings

from .services.strategy import GRADIENT_DESCENT, GRADIENT_READINGS, SOLVER_CHARACTERISTICS, SOLVER_FV, VARIANTS
from .services.velocity import KERNEL_FORMS


def _is_number(value) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


class FloatListField(forms.Field):
    """Fixed-length list of numbers, cleaned to a tuple of floats."""

    def __init__(self, length=None, **kwargs):
        self.length = length
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if not isinstance(value, (list, tuple)) or not all(_is_number(v) for v in value):
            raise forms.ValidationError('Expected a list of numbers')
        if self.length is not None and len(value) != self.length:
            raise forms.ValidationError(f'Expected {self.length} numbers, got {len(value)}')
        return tuple(float(v) for v in value)


class ControlTableField(forms.Field):
    """List of [ux, uy] pairs."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if not isinstance(value, (list, tuple)):
            raise forms.ValidationError('Expected a list of [ux, uy] pairs')
        pairs = []
        for entry in value:
            if (not isinstance(entry, (list, tuple)) or len(entry) != 2
                    or not all(_is_number(v) for v in entry)):
                raise forms.ValidationError('Expected a list of [ux, uy] pairs')
            pairs.append((float(entry[0]), float(entry[1])))
        return tuple(pairs)


class TableField(forms.Field):
    """Nested TOML table, validated later by its own form."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if not isinstance(value, dict):
            raise forms.ValidationError('Expected a table')
        return value


class StrictNumberField(forms.FloatField):
    """FloatField that refuses strings and booleans (TOML values are typed)."""

    def to_python(self, value):
        if value not in self.empty_values and not _is_number(value):
            raise forms.ValidationError('Enter a number.', code='invalid')
        return super().to_python(value)


class StrictIntegerField(forms.IntegerField):

    def to_python(self, value):
        if isinstance(value, bool) or (value not in self.empty_values and not isinstance(value, int)):
            raise forms.ValidationError('Enter a whole number.', code='invalid')
        return super().to_python(value)


class TableForm(forms.Form):
    """Base form for one TOML table: rejects unknown keys and reports key paths."""

    def __init__(self, data, path: str):
        self.path = path
        super().__init__(data=data)

    def clean(self):
        cleaned = super().clean()
        unknown = sorted(set(self.data) - set(self.fields))
        if unknown:
            raise forms.ValidationError(f"unknown key(s): {', '.join(unknown)}")
        return cleaned

    def error_messages_with_paths(self):
        messages = []
        for name, errors in self.errors.items():
            prefix = self.path if name == '__all__' else f"{self.path}.{name}"
            messages.extend(f"{prefix}: {error}" for error in errors)
        return messages


class DomainForm(TableForm):
    x0 = StrictNumberField()
    x1 = StrictNumberField()
    y0 = StrictNumberField()
    y1 = StrictNumberField()

    def clean(self):
        cleaned = super().clean()
        x0, x1 = cleaned.get('x0'), cleaned.get('x1')
        y0, y1 = cleaned.get('y0'), cleaned.get('y1')
        if None not in (x0, x1) and x1 <= x0:
            self.add_error('x1', 'must exceed x0')
        if None not in (y0, y1) and y1 <= y0:
            self.add_error('y1', 'must exceed y0')
        return cleaned


class GridForm(TableForm):
    nx = StrictIntegerField(required=False, min_value=2)
    ny = StrictIntegerField(required=False, min_value=2)
    cfl = StrictNumberField(required=False)

    def clean_cfl(self):
        cfl = self.cleaned_data.get('cfl')
        if cfl is None:
            return settings.CONSENSUS_CFL
        if not 0 < cfl <= 1:
            raise forms.ValidationError('must lie in (0, 1]')
        return cfl

    def clean(self):
        cleaned = super().clean()
        for name in ('nx', 'ny'):
            if name in cleaned and cleaned[name] is None:
                cleaned[name] = settings.CONSENSUS_DEFAULT_GRID
        return cleaned


class TimeForm(TableForm):
    T = StrictNumberField()
    dt_strategy = StrictNumberField(required=False)

    def clean_T(self):
        T = self.cleaned_data['T']
        if not T > 0:
            raise forms.ValidationError('must be positive')
        return T

    def clean_dt_strategy(self):
        dt = self.cleaned_data.get('dt_strategy')
        if dt is None:
            return 0.01
        if not dt > 0:
            raise forms.ValidationError('must be positive')
        return dt

    def clean(self):
        cleaned = super().clean()
        T, dt = cleaned.get('T'), cleaned.get('dt_strategy')
        if T is not None and dt is not None and round(T / dt) < 1:
            raise forms.ValidationError('T is shorter than one strategy interval')
        return cleaned


class DensityForm(TableForm):
    box = FloatListField(length=4)
    amplitude = StrictNumberField(required=False)
    mollify_cells = StrictNumberField(required=False)

    def clean_box(self):
        ax, bx, ay, by = self.cleaned_data['box']
        if bx <= ax or by <= ay:
            raise forms.ValidationError('box must be [ax, bx, ay, by] with ax < bx and ay < by')
        return self.cleaned_data['box']

    def clean_amplitude(self):
        amplitude = self.cleaned_data.get('amplitude')
        if amplitude is None:
            return 1.0
        if not amplitude > 0:
            raise forms.ValidationError('must be positive')
        return amplitude

    def clean_mollify_cells(self):
        cells = self.cleaned_data.get('mollify_cells')
        if cells is None:
            return 2.0
        if cells < 0:
            raise forms.ValidationError('must be non-negative')
        return cells


class KernelForm(TableForm):
    sign = StrictIntegerField(required=False)
    decay_length = StrictNumberField(required=False)
    form = forms.ChoiceField(choices=[(f, f) for f in KERNEL_FORMS], required=False)
    epsilon = StrictNumberField(required=False)
    strength = StrictNumberField(required=False)

    def clean_sign(self):
        sign = self.cleaned_data.get('sign')
        if sign is None:
            return 1
        if sign not in (1, -1):
            raise forms.ValidationError('must be +1 or -1')
        return sign

    def clean_decay_length(self):
        L = self.cleaned_data.get('decay_length')
        if L is None:
            return 5.0
        if not L > 0:
            raise forms.ValidationError('must be positive')
        return L

    def clean_form(self):
        return self.cleaned_data.get('form') or KERNEL_FORMS[0]

    def clean_epsilon(self):
        eps = self.cleaned_data.get('epsilon')
        if eps is not None and eps < 0:
            raise forms.ValidationError('must be non-negative')
        return eps

    def clean_strength(self):
        strength = self.cleaned_data.get('strength')
        if strength is None:
            return 1.0
        if strength < 0:
            raise forms.ValidationError('must be non-negative')
        return strength


class StrategyForm(TableForm):
    variant = forms.ChoiceField(choices=[(v, v) for v in VARIANTS])
    denom_tol = StrictNumberField(required=False)
    control = FloatListField(length=2, required=False)
    times = FloatListField(required=False)
    controls = ControlTableField(required=False)
    n_directions = StrictIntegerField(required=False, min_value=4)
    solver = forms.ChoiceField(
        choices=[(SOLVER_FV, SOLVER_FV), (SOLVER_CHARACTERISTICS, SOLVER_CHARACTERISTICS)],
        required=False,
    )
    gradient = forms.ChoiceField(choices=[(r, r) for r in GRADIENT_READINGS], required=False)

    def clean(self):
        cleaned = super().clean()
        variant = cleaned.get('variant')
        if variant == 'constant' and cleaned.get('control') is None:
            self.add_error('control', 'required for the constant variant')
        if variant == 'scripted':
            times, controls = cleaned.get('times'), cleaned.get('controls')
            if times is None or controls is None:
                raise forms.ValidationError('scripted variant needs times and controls')
            if len(times) != len(controls):
                self.add_error('controls', 'must have one entry per time')
        if cleaned.get('n_directions') is None:
            cleaned['n_directions'] = 64
        cleaned['solver'] = cleaned.get('solver') or SOLVER_FV
        cleaned['gradient'] = cleaned.get('gradient') or GRADIENT_DESCENT
        return cleaned


class AgentForm(TableForm):
    position = FloatListField(length=2)
    kernel = TableField(required=False)
    speed_cap = StrictNumberField()
    strategy = TableField()
    target = FloatListField(length=2, required=False)
    psi_sign = StrictIntegerField(required=False)

    def clean_speed_cap(self):
        U = self.cleaned_data['speed_cap']
        if U < 0:
            raise forms.ValidationError('must be non-negative')
        return U

    def clean_psi_sign(self):
        sign = self.cleaned_data.get('psi_sign')
        if sign is None:
            return 1
        if sign not in (1, -1):
            raise forms.ValidationError('must be +1 or -1')
        return sign


class OutputForm(TableForm):
    snapshot_times = FloatListField(required=False)

    def clean_snapshot_times(self):
        times = self.cleaned_data.get('snapshot_times') or ()
        if any(t < 0 for t in times):
            raise forms.ValidationError('snapshot times must be non-negative')
        return tuple(sorted(times))
