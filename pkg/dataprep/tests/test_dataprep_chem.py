"""SMILES parsing: graph structure, implicit hydrogens, rejection of bad input."""

import pytest

from dataprep.chem import PrepError, parse_smiles


class TestStructure:
    def test_ethanol(self):
        mol = parse_smiles("CCO")
        assert len(mol.atoms) == 3
        assert len(mol.bonds) == 2
        assert [a.element for a in mol.atoms] == ["C", "C", "O"]
        assert [a.degree for a in mol.atoms] == [1, 2, 1]
        assert [a.num_h for a in mol.atoms] == [3, 2, 1]
        assert all(a.hybridization == "SP3" for a in mol.atoms)
        assert not any(a.in_ring for a in mol.atoms)

    def test_acetic_acid_bond_orders(self):
        mol = parse_smiles("CC(=O)O")
        orders = sorted(b.order for b in mol.bonds)
        assert orders == [1, 1, 2]
        # the carbonyl carbon and oxygen are sp2
        assert mol.atoms[1].hybridization == "SP2"
        assert mol.atoms[2].hybridization == "SP2"
        assert mol.atoms[1].num_h == 0

    def test_benzene(self):
        mol = parse_smiles("c1ccccc1")
        assert len(mol.atoms) == 6 and len(mol.bonds) == 6
        assert all(b.order == "aromatic" for b in mol.bonds)
        for a in mol.atoms:
            assert a.aromatic and a.in_ring
            assert a.num_h == 1
            assert a.hybridization == "SP2"

    def test_pyridine_nitrogen_has_no_hydrogen(self):
        mol = parse_smiles("c1ccncc1")
        n = [a for a in mol.atoms if a.element == "N"]
        assert len(n) == 1 and n[0].num_h == 0

    def test_triple_bond_sp(self):
        mol = parse_smiles("C#N")
        assert [a.hybridization for a in mol.atoms] == ["SP", "SP"]
        assert mol.atoms[0].num_h == 1 and mol.atoms[1].num_h == 0

    def test_bracket_charge_and_hydrogens(self):
        mol = parse_smiles("[NH3+]")
        atom = mol.atoms[0]
        assert atom.formal_charge == 1 and atom.num_h == 3

    def test_bracket_anion(self):
        mol = parse_smiles("CC(=O)[O-]")
        assert mol.atoms[-1].formal_charge == -1
        assert mol.atoms[-1].num_h == 0

    def test_two_letter_elements(self):
        assert [a.element for a in parse_smiles("CCCl").atoms] == ["C", "C", "Cl"]
        assert [a.element for a in parse_smiles("BrCC").atoms] == ["Br", "C", "C"]

    def test_branching_degrees(self):
        mol = parse_smiles("CC(C)(C)O")
        assert mol.atoms[1].degree == 4
        assert mol.atoms[1].num_h == 0

    def test_percent_ring_closure(self):
        mol = parse_smiles("C%12CCCCC%12")
        assert len(mol.atoms) == 6 and len(mol.bonds) == 6
        assert all(a.in_ring for a in mol.atoms)

    def test_linker_atom_is_not_in_ring(self):
        mol = parse_smiles("c1ccccc1Cc1ccccc1")
        linker = mol.atoms[6]
        assert linker.element == "C" and not linker.aromatic
        assert not linker.in_ring
        assert sum(a.in_ring for a in mol.atoms) == 12

    def test_stereo_markers_ignored(self):
        mol = parse_smiles("C/C=C/C")
        assert len(mol.atoms) == 4
        assert sorted(b.order for b in mol.bonds) == [1, 1, 2]


class TestRejection:
    @pytest.mark.parametrize("bad", [
        "", "   ", "C(", "C)", "C1CC", "Cx", "C..C", "C=", "==CC",
        "[Qz]", "(CC)", "1CC", "C%1C",
    ])
    def test_invalid_smiles_rejected(self, bad):
        with pytest.raises(PrepError):
            parse_smiles(bad)

    def test_duplicate_ring_bond_rejected(self):
        with pytest.raises(PrepError, match="duplicate"):
            parse_smiles("C12CC12")
