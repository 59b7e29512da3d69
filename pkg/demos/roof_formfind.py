"""Form-find the pentagon roof for a few scale factors and report compliance.

Building the model takes about a minute.
"""
from latticeskin.problems import pentagon_roof
from latticeskin.shape import _sheet_weights, form_find

roof = pentagon_roof(m=9)
sol, _ = roof.solve()
print(f"flat plate: J = {sol.J:.5g}")
carry = _sheet_weights(roof.mesh, roof.lattice.joints[roof.free_joints])
for s in (-0.25, -0.5, -1.0):
    model = form_find(roof, s, solution=sol, carry=carry)
    rise = model.mesh.vertices[:, 2].max() - model.mesh.vertices[:, 2].min()
    print(f"s = {s:5.2f}: rise {rise:.3f} m, J = {model.solve()[0].J:.5g}")
