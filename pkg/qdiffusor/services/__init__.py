from .container import Container, read_container, write_container
from .phantoms import make_sphere_phantom, make_brain_phantom
