import numpy as np
import pytest

from src.errors import CutoffError, InvalidDefectPlacement
from src.local_spaces import (
    BosonSpace,
    DefectSpace,
    DimerSpace,
    TwoSpeciesSpace,
    boson_annihilator,
    space_from_description,
)


class TestLocalSpaces:
    """Local Hilbert spaces: charges, operators and segment site states"""

    def test_boson_ladder(self):
        b = boson_annihilator(3)
        assert np.allclose(np.diag(b.T @ b), [0, 1, 2, 3])

    def test_boson_site_states(self):
        space = BosonSpace(3)
        assert space.d == 4
        assert space.site_state(2) == 2
        assert space.site_state(2, -1) == 1
        assert space.site_state(2, 1) == 3
        with pytest.raises(CutoffError):
            space.site_state(3, 1)
        with pytest.raises(InvalidDefectPlacement):
            space.site_state(0, -1)

    def test_boson_cutoff_must_hold_a_particle(self):
        with pytest.raises(CutoffError):
            BosonSpace(0)

    def test_two_species_charges(self):
        space = TwoSpeciesSpace(2, 2)
        assert space.d == 9
        assert space.n_charges == 2
        hole_a = space.site_state(2, -1, "a")
        assert space.charges[hole_a].tolist() == [0, 1]
        assert space.states_with_occupation(1, "b").tolist() == [space.index(0, 1)]
        with pytest.raises(InvalidDefectPlacement):
            space.site_state(2, -1)
        with pytest.raises(InvalidDefectPlacement):
            space.site_state(1)

    def test_defect_register(self):
        space = DefectSpace()
        assert space.site_state(2, -1) == DefectSpace.MONOMER
        assert space.site_state(2, 1) == DefectSpace.TRIMER
        assert space.site_state(0, 1) == DefectSpace.MONOMER
        assert space.site_state(0) == DefectSpace.BACKGROUND
        assert space.states_with_occupation(1).tolist() == [DefectSpace.MONOMER]
        with pytest.raises(InvalidDefectPlacement, match="a hole on an empty site"):
            space.site_state(0, -1)
        with pytest.raises(ValueError):
            space.states_with_occupation(2)

    def test_dimer_space_has_no_defects(self):
        space = DimerSpace()
        assert space.site_state(2) == 1
        with pytest.raises(InvalidDefectPlacement):
            space.site_state(2, -1)

    def test_pair_charge_totals(self):
        totals = BosonSpace(1).pair_charge_totals()
        assert totals.ravel().tolist() == [0, 1, 1, 2]

    @pytest.mark.parametrize("space", [BosonSpace(2), TwoSpeciesSpace(1, 3), DefectSpace(), DimerSpace()])
    def test_description_rebuilds_space(self, space):
        assert space_from_description(space.describe()) == space

    def test_unknown_species(self):
        with pytest.raises(ValueError):
            BosonSpace(2).annihilator("a")
