# Inicialización del paquete de pruebas de servicios 