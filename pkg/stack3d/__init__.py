# Face-to-face 3D backend flow package
